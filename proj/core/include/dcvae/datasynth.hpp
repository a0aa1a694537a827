#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcvae/tensor.hpp"

namespace dcvae {

// Procedural desk-scale datasets mirroring the two label regimes: a
// rotation-labeled glyph family (spatial-related label) and an
// identity/palette-labeled family (style-related label).
enum class Family : std::uint8_t { Rotation = 0, StyleIdentity = 1 };

struct DatasetConfig {
  Family family = Family::Rotation;
  int n_classes = 12;  // Rotation default 12 angle bins; StyleIdentity 10 ids
  int per_class = 200;
  int image_size = 64;
  std::uint64_t seed = 1;
};

struct DatasetArchive {
  DatasetConfig config;
  std::vector<std::uint8_t> pixels;  // count * size * size * 3, RGB
  std::vector<std::uint32_t> labels;

  std::size_t count() const { return labels.size(); }
  const std::uint8_t* image(std::size_t i) const {
    return pixels.data() + i * static_cast<std::size_t>(config.image_size) *
                               config.image_size * 3;
  }
  bool operator==(const DatasetArchive& o) const;
};

// Latent factors logged per image; which fields carry signal depends on the
// family. The label must be a deterministic function of the label-relevant
// factor and independent of all the others.
struct FactorRecord {
  int label = 0;
  int shape_kind = 0;  // Rotation: glyph family
  float stroke = 0;    // Rotation: rim width
  float hue = 0;       // Rotation: fill hue
  float rot = 0;       // StyleIdentity: glyph rotation (radians)
  float scale = 0;     // StyleIdentity: glyph size (pixels)
  float dx = 0, dy = 0;  // StyleIdentity: position offset (pixels)
};

struct GeneratedSet {
  DatasetArchive archive;
  std::vector<FactorRecord> factors;
};

GeneratedSet gen_rotation_set(const DatasetConfig& cfg);
GeneratedSet gen_style_set(const DatasetConfig& cfg);
GeneratedSet gen_dataset(const DatasetConfig& cfg);  // dispatch on family

// Archive file: magic "DSET1\0", u32 version, config block, u32 count,
// then per image: u32 label, size*size*3 RGB bytes. Bit-exact round trip.
void save_archive(const std::string& path, const DatasetArchive& archive);
DatasetArchive load_archive(const std::string& path);

// [0,255] u8 -> [-1,1] float, exactly x/127.5 - 1
Tensor images_to_tensor(const DatasetArchive& archive,
                        const std::vector<std::size_t>& indices);
std::vector<int> labels_of(const DatasetArchive& archive,
                           const std::vector<std::size_t>& indices);

// float image batch (N,H,W,3) in [-1,1] -> interleaved u8 RGB
std::vector<std::uint8_t> tensor_to_u8(const Tensor& images);

}  // namespace dcvae
