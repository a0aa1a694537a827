#include "dcvae/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace dcvae {

namespace {

constexpr char kMagic[6] = {'D', 'C', 'V', 'K', '1', '\0'};

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n, const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (f.gcount() != static_cast<std::streamsize>(n))
    throw IoError(std::string("checkpoint truncated while reading ") + what);
}

}  // namespace

void save_tensors(const std::string& path, const TensorMap& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_bytes(f, kMagic, sizeof(kMagic));
  const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
  write_bytes(f, &count, 4);
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF)
      throw IoError("tensor name too long: " + name);
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    write_bytes(f, &len, 2);
    write_bytes(f, name.data(), name.size());
    const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
    write_bytes(f, &rank, 1);
    for (int d : t.shape()) {
      const std::uint32_t e = static_cast<std::uint32_t>(d);
      write_bytes(f, &e, 4);
    }
    write_bytes(f, t.data(), t.numel() * sizeof(float));
  }
  f.flush();
  if (!f) throw IoError("write failed for '" + path + "'");
}

TensorMap load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[6];
  read_bytes(f, magic, 6, "magic");
  if (std::memcmp(magic, kMagic, 6) != 0)
    throw IoError("'" + path + "' is not a DCVK1 checkpoint");
  std::uint32_t count = 0;
  read_bytes(f, &count, 4, "tensor count");
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    read_bytes(f, &len, 2, "name length");
    std::string name(len, '\0');
    read_bytes(f, name.data(), len, "name");
    std::uint8_t rank = 0;
    read_bytes(f, &rank, 1, "rank");
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) {
      std::uint32_t e = 0;
      read_bytes(f, &e, 4, "extent");
      shape[static_cast<std::size_t>(d)] = static_cast<int>(e);
    }
    Tensor t(shape);
    read_bytes(f, t.data(), t.numel() * sizeof(float), name.c_str());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void load_into_params(const TensorMap& tensors, ParamMap& params) {
  for (auto& [name, var] : params) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw IoError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != var.shape())
      throw IoError("checkpoint shape " + shape_str(it->second.shape()) +
                    " does not match parameter '" + name + "' " +
                    shape_str(var.shape()));
    var.value_mut() = it->second;
  }
}

TensorMap params_to_tensors(const ParamMap& params) {
  TensorMap out;
  for (const auto& [name, var] : params) out.emplace(name, var.value());
  return out;
}

}  // namespace dcvae
