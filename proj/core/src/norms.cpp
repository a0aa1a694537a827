#include "dcvae/norms.hpp"

namespace dcvae {

namespace {

void require_role(const LatentCode& code, CodeRole want, const char* where) {
  if (code.role != want)
    throw ConfigError(std::string(where) + ": expected a " + role_name(want) +
                      " code, got " + role_name(code.role));
}

// 1x1 conv initialized to average the two concatenated branches, so the
// fused block starts out scale-preserving instead of near-zero.
Tensor averaging_reduce(int channels) {
  Tensor w({1, 1, 2 * channels, channels});
  for (int c = 0; c < channels; ++c) {
    w.at(0, 0, c, c) = 0.5f;
    w.at(0, 0, c + channels, c) = 0.5f;
  }
  return w;
}

Tensor gamma_one_bias(int channels) {
  Tensor b({2 * channels});
  for (int c = 0; c < channels; ++c) b[static_cast<std::size_t>(c)] = 1.0f;
  return b;
}

}  // namespace

AdaINParams AdaINParams::init(int code_dim, int channels, RngState& rng) {
  AdaINParams p;
  p.w = Var::param(randn({code_dim, 2 * channels}, 0.02f, rng));
  p.b = Var::param(gamma_one_bias(channels));
  p.channels = channels;
  return p;
}

void AdaINParams::collect(const std::string& prefix, ParamMap& out) const {
  out[prefix + ".w"] = w;
  out[prefix + ".b"] = b;
}

SpadeParams SpadeParams::init(int hidden, int channels, RngState& rng) {
  SpadeParams p;
  p.w1 = Var::param(randn({3, 3, 1, hidden}, 0.02f, rng));
  p.b1 = Var::param(Tensor({hidden}));
  p.w2 = Var::param(randn({3, 3, hidden, 2 * channels}, 0.02f, rng));
  p.b2 = Var::param(gamma_one_bias(channels));
  p.channels = channels;
  p.hidden = hidden;
  return p;
}

void SpadeParams::collect(const std::string& prefix, ParamMap& out) const {
  out[prefix + ".w1"] = w1;
  out[prefix + ".b1"] = b1;
  out[prefix + ".w2"] = w2;
  out[prefix + ".b2"] = b2;
}

DualNormParams DualNormParams::init(int code_dim, int spade_hidden,
                                    int channels, RngState& rng) {
  DualNormParams p;
  p.adain = AdaINParams::init(code_dim, channels, rng);
  p.spade = SpadeParams::init(spade_hidden, channels, rng);
  p.reduce_w = Var::param(averaging_reduce(channels));
  p.reduce_b = Var::param(Tensor({channels}));
  return p;
}

void DualNormParams::collect(const std::string& prefix, ParamMap& out) const {
  adain.collect(prefix + ".adain", out);
  spade.collect(prefix + ".spade", out);
  out[prefix + ".reduce_w"] = reduce_w;
  out[prefix + ".reduce_b"] = reduce_b;
}

UncondNormParams UncondNormParams::init(int channels, RngState&) {
  UncondNormParams p;
  p.gamma = Var::param(Tensor({1, 1, 1, channels}, 1.0f));
  p.beta = Var::param(Tensor({1, 1, 1, channels}));
  return p;
}

void UncondNormParams::collect(const std::string& prefix, ParamMap& out) const {
  out[prefix + ".gamma"] = gamma;
  out[prefix + ".beta"] = beta;
}

Var adain(const Var& h, const LatentCode& style, const AdaINParams& p) {
  require_role(style, CodeRole::StyleVector, "adain");
  const Shape& hs = h.shape();
  if (hs.size() != 4)
    throw ShapeError("adain: expected NHWC input, got " + shape_str(hs));
  const int n = hs[0], c = hs[3];
  if (hs[3] != p.channels)
    throw ShapeError("adain: params built for " + std::to_string(p.channels) +
                     " channels, input has " + std::to_string(c));

  // instance statistics over the spatial dims
  auto [mean, std] = moments(h, {1, 2});
  Var normed = div(sub(h, mean), std);

  Var code = reshape(style.values, {n, style.values.shape().back()});
  Var gb = linear(code, p.w, p.b);  // (N, 2C)
  Var gamma = reshape(slice_ch(gb, 0, c), {n, 1, 1, c});
  Var beta = reshape(slice_ch(gb, c, 2 * c), {n, 1, 1, c});
  return add(mul(gamma, normed), beta);
}

Var spade(const Var& h, const LatentCode& spatial, const SpadeParams& p) {
  require_role(spatial, CodeRole::SpatialMap, "spade");
  const Shape& hs = h.shape();
  if (hs.size() != 4)
    throw ShapeError("spade: expected NHWC input, got " + shape_str(hs));
  const int c = hs[3];
  if (c != p.channels)
    throw ShapeError("spade: params built for " + std::to_string(p.channels) +
                     " channels, input has " + std::to_string(c));

  // batch statistics: per channel over N, H, W
  auto [mean, std] = moments(h, {0, 1, 2});
  Var normed = div(sub(h, mean), std);

  Var code = nearest_resize(spatial.values, hs[1], hs[2]);
  Var hidden = leaky_relu(conv2d(code, p.w1, p.b1, 1, 1));
  Var gb = conv2d(hidden, p.w2, p.b2, 1, 1);  // (N,H,W,2C)
  Var gamma = slice_ch(gb, 0, c);
  Var beta = slice_ch(gb, c, 2 * c);
  return add(mul(gamma, normed), beta);
}

Var dual_norm(const Var& h, const LatentCode& style, const LatentCode& spatial,
              const DualNormParams& p) {
  if (style.role == spatial.role)
    throw ConfigError("dual_norm: needs one StyleVector and one SpatialMap, "
                      "got two " +
                      role_name(style.role) + " codes");
  Var a = adain(h, style, p.adain);
  Var s = spade(h, spatial, p.spade);
  Var fused = concat_ch({a, s});
  return conv2d(fused, p.reduce_w, p.reduce_b, 1, 0);
}

Var uncond_norm(const Var& h, const UncondNormParams& p) {
  auto [mean, std] = moments(h, {0, 1, 2});
  return add(mul(p.gamma, div(sub(h, mean), std)), p.beta);
}

CondNorm CondNorm::make(int channels, const std::vector<NormBranchKind>& kinds,
                        int code_dim, int spade_hidden, RngState& rng) {
  if (kinds.size() > 2)
    throw ConfigError("CondNorm: at most two branches");
  CondNorm n;
  n.channels_ = channels;
  n.kinds_ = kinds;
  for (NormBranchKind k : kinds) {
    if (k == NormBranchKind::AdaIN) {
      n.branch_index_.push_back(static_cast<int>(n.adains_.size()));
      n.adains_.push_back(AdaINParams::init(code_dim, channels, rng));
    } else {
      n.branch_index_.push_back(static_cast<int>(n.spades_.size()));
      n.spades_.push_back(SpadeParams::init(spade_hidden, channels, rng));
    }
  }
  if (kinds.size() == 2) {
    n.reduce_w_ = Var::param(averaging_reduce(channels));
    n.reduce_b_ = Var::param(Tensor({channels}));
  }
  if (kinds.empty()) n.uncond_ = UncondNormParams::init(channels, rng);
  return n;
}

Var CondNorm::apply(const Var& h,
                    const std::vector<const LatentCode*>& codes) const {
  if (codes.size() != kinds_.size())
    throw ConfigError("CondNorm: " + std::to_string(kinds_.size()) +
                      " branches but " + std::to_string(codes.size()) +
                      " codes supplied");
  if (kinds_.empty()) return uncond_norm(h, uncond_);
  std::vector<Var> branch_out;
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    const int bi = branch_index_[i];
    if (kinds_[i] == NormBranchKind::AdaIN)
      branch_out.push_back(adain(h, *codes[i], adains_[static_cast<std::size_t>(bi)]));
    else
      branch_out.push_back(spade(h, *codes[i], spades_[static_cast<std::size_t>(bi)]));
  }
  if (branch_out.size() == 1) return branch_out[0];
  Var fused = concat_ch(branch_out);
  return conv2d(fused, reduce_w_, reduce_b_, 1, 0);
}

void CondNorm::collect(const std::string& prefix, ParamMap& out) const {
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    const std::string bp = prefix + ".b" + std::to_string(i);
    const int bi = branch_index_[i];
    if (kinds_[i] == NormBranchKind::AdaIN)
      adains_[static_cast<std::size_t>(bi)].collect(bp + ".adain", out);
    else
      spades_[static_cast<std::size_t>(bi)].collect(bp + ".spade", out);
  }
  if (kinds_.size() == 2) {
    out[prefix + ".reduce_w"] = reduce_w_;
    out[prefix + ".reduce_b"] = reduce_b_;
  }
  if (kinds_.empty()) uncond_.collect(prefix + ".uncond", out);
}

}  // namespace dcvae
