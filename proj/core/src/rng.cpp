#include "dcvae/rng.hpp"

#include <cmath>

namespace dcvae {

namespace {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t RngState::next_u64() {
  ++pos_;
  return mix64(seed_ + pos_ * 0x9E3779B97F4A7C15ull);
}

float RngState::uniform() {
  // 24 high bits -> float in [0, 1)
  return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
}

float RngState::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller in double, truncated to float.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = static_cast<float>(r * std::sin(a));
  have_spare_ = true;
  return static_cast<float>(r * std::cos(a));
}

std::uint32_t RngState::below(std::uint32_t n) {
  if (n <= 1) return 0;
  // Rejection-free modulo is fine here: n is tiny relative to 2^64.
  return static_cast<std::uint32_t>(next_u64() % n);
}

std::uint64_t RngState::derive(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed ^ 0xD6E8FEB86659FD93ull) + stream);
}

}  // namespace dcvae
