#pragma once

#include <cstdint>

namespace dcvae {

// Deterministic counter-based RNG (splitmix64 core). Identical seed and call
// sequence give a bit-identical sample stream on one platform. Sub-streams
// for parallel work are derived with derive(), never by sharing one state.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed), pos_(0) {}

  std::uint64_t next_u64();
  float uniform();  // [0, 1)
  float normal();   // standard normal via Box-Muller
  std::uint32_t below(std::uint32_t n);  // uniform int in [0, n)

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return pos_; }

  // Stable derivation of an independent sub-stream seed.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::uint64_t pos_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

}  // namespace dcvae
