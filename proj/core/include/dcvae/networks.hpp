#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dcvae/norms.hpp"

namespace dcvae {

// Diagonal Gaussian posterior over z_u given (x, z_s).
struct Posterior {
  Var mu;
  Var logvar;  // clamped to [-10, 10]
};

struct GeneratorSpec {
  int image_size = 64;   // only 64x64 supported; anything else is rejected
  int base_channels = 32;
  int spade_hidden = 32;
  int style_dim = 256;   // style code is 1x1x256
  int map_hw = 16;       // spatial code is 16x16x1 (k = 64/16 = 4)
  LabelSpec labels;
  Preset preset = Preset::Proposed;
};

struct DiscriminatorSpec {
  int image_size = 64;
  int base_channels = 32;
  int n_classes = 2;
};

// Condition mapping network f: one-hot label -> deterministic z_s.
class CondMap {
 public:
  CondMap() = default;
  CondMap(int n_classes, int style_dim, int map_hw, CodeRole out_role,
          RngState& rng);
  LatentCode apply(const Var& onehot) const;
  void collect(const std::string& prefix, ParamMap& out) const;

 private:
  Var w1_, b1_, w2_, b2_, w3_, b3_;
  int n_classes_ = 0;
  int style_dim_ = 0;
  int map_hw_ = 0;
  CodeRole out_role_ = CodeRole::SpatialMap;
};

// Image encoder producing the z_u posterior; z_s conditions every block
// through the adaptive normalization branch matching its role.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const GeneratorSpec& spec, const RoutingConfig& routing,
          RngState& rng);
  Posterior apply(const Var& images, const LatentCode& z_s) const;
  void collect(const std::string& prefix, ParamMap& out) const;

 private:
  struct Block {
    Var w, b;
    CondNorm norm;
  };
  std::vector<Block> blocks_;
  // spatial posterior head: two upsampling conv stages + 1x1 to (mu, logvar)
  std::vector<Block> up_;
  Var head_w_, head_b_;            // spatial: 1x1 conv 2b -> 2
  Var mu_w_, mu_b_, lv_w_, lv_b_;  // style: FC heads from pooled features
  GeneratorSpec spec_;
  CodeRole z_u_role_ = CodeRole::StyleVector;
};

// Decoder from a learned constant input; codes enter by route.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const GeneratorSpec& spec, const RoutingConfig& routing,
          RngState& rng);
  Var apply(const LatentCode& z_s, const LatentCode& z_u) const;
  void collect(const std::string& prefix, ParamMap& out) const;

 private:
  struct Block {
    Var w, b;
    CondNorm norm;
  };
  Var const_input_;  // (1, 4, 4, C0)
  std::vector<Block> blocks_;
  Var rgb_w_, rgb_b_;
  GeneratorSpec spec_;
  RoutingConfig routing_;
  // which of (z_s, z_u) each norm branch consumes, in branch order
  std::vector<int> norm_code_of_branch_;
};

// Projection discriminator: psi(pool(phi(x))) + <embed(c), pool(phi(x))>.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t init_seed);
  Var score(const Var& images, const Var& onehot) const;  // (N, 1)
  void collect(ParamMap& out) const;

 private:
  std::vector<Var> ws_, bs_;
  Var psi_w_, psi_b_, embed_w_;
  DiscriminatorSpec spec_;
};

// The generator triple (f, Enc, Dec) under one routing preset.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorSpec& spec, std::uint64_t init_seed);

  LatentCode cond_map(const Var& onehot) const;
  Posterior encode(const Var& images, const LatentCode& z_s) const;
  Var decode(const LatentCode& z_s, const LatentCode& z_u) const;

  // decode(cond_map(c_target), z_u ~ encode(x, cond_map(c_source)))
  Var exchange(const Var& images, const Var& onehot_source,
               const Var& onehot_target, RngState& rng) const;

  LatentCode posterior_code(const Posterior& p, RngState& rng) const;
  LatentCode prior_code(int batch, RngState& rng) const;

  const GeneratorSpec& spec() const { return spec_; }
  const RoutingConfig& routing() const { return routing_; }
  void collect(ParamMap& out) const;

 private:
  GeneratorSpec spec_;
  RoutingConfig routing_;
  CondMap f_;
  Encoder enc_;
  Decoder dec_;
};

// One-hot helpers shared by trainer and tools.
Tensor one_hot(const std::vector<int>& labels, int n_classes);
void validate_one_hot(const Tensor& t, const char* where);

}  // namespace dcvae
