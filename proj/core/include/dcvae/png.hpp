#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcvae {

// Minimal standard PNG writer (8-bit RGB, zlib-deflated).
void write_png_rgb(const std::string& path, int width, int height,
                   const std::uint8_t* rgb);

std::vector<std::uint8_t> encode_png_rgb(int width, int height,
                                         const std::uint8_t* rgb);

}  // namespace dcvae
