#pragma once

#include <string>
#include <vector>

#include "dcvae/latent.hpp"

namespace dcvae {

// Adaptive normalizations: both regimes share the form
//   out = gamma(z) * (h - mu_h) / sigma_h + beta(z)
// and differ in where the statistics come from and how gamma/beta vary.
// AdaIN: instance statistics (per entry, per channel, over H and W),
// per-channel gamma/beta from an affine map of the style vector.
// SPADE: batch statistics (per channel, over N, H and W), per-pixel
// gamma/beta maps from a small conv net over the resized spatial code.

struct AdaINParams {
  Var w;  // (code_dim, 2C): rows -> [gamma | beta]
  Var b;  // (2C); gamma half initialized to 1
  int channels = 0;

  static AdaINParams init(int code_dim, int channels, RngState& rng);
  void collect(const std::string& prefix, ParamMap& out) const;
};

struct SpadeParams {
  Var w1, b1;  // 3x3 conv, 1 -> hidden
  Var w2, b2;  // 3x3 conv, hidden -> 2C; gamma-half bias initialized to 1
  int channels = 0;
  int hidden = 0;

  static SpadeParams init(int hidden, int channels, RngState& rng);
  void collect(const std::string& prefix, ParamMap& out) const;
};

struct DualNormParams {
  AdaINParams adain;
  SpadeParams spade;
  Var reduce_w;  // 1x1 conv (1,1,2C,C); initialized to average the branches
  Var reduce_b;  // (C)

  static DualNormParams init(int code_dim, int spade_hidden, int channels,
                             RngState& rng);
  void collect(const std::string& prefix, ParamMap& out) const;
};

// Unconditional fallback: batch statistics with learned gamma/beta.
struct UncondNormParams {
  Var gamma, beta;  // (1,1,1,C)

  static UncondNormParams init(int channels, RngState& rng);
  void collect(const std::string& prefix, ParamMap& out) const;
};

Var adain(const Var& h, const LatentCode& style, const AdaINParams& p);
Var spade(const Var& h, const LatentCode& spatial, const SpadeParams& p);
Var dual_norm(const Var& h, const LatentCode& style, const LatentCode& spatial,
              const DualNormParams& p);
Var uncond_norm(const Var& h, const UncondNormParams& p);

// Per-layer conditional normalization covering every routing case: zero
// branches (unconditional), a single branch, or two branches fused by
// channel concat + 1x1 reduction. Branch kinds follow the routed codes.
enum class NormBranchKind { AdaIN, Spade };

class CondNorm {
 public:
  static CondNorm make(int channels, const std::vector<NormBranchKind>& kinds,
                       int code_dim, int spade_hidden, RngState& rng);

  // codes.size() must equal the branch count; roles are checked per branch.
  Var apply(const Var& h, const std::vector<const LatentCode*>& codes) const;
  void collect(const std::string& prefix, ParamMap& out) const;

  int branch_count() const { return static_cast<int>(kinds_.size()); }

 private:
  int channels_ = 0;
  std::vector<NormBranchKind> kinds_;
  std::vector<AdaINParams> adains_;
  std::vector<SpadeParams> spades_;
  std::vector<int> branch_index_;  // per branch, index into its kind's vector
  Var reduce_w_, reduce_b_;        // two-branch fusion
  UncondNormParams uncond_;        // zero-branch fallback
};

}  // namespace dcvae
