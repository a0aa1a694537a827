#include "dcvae/networks.hpp"

#include <cmath>

namespace dcvae {

namespace {

void check_image_batch(const Var& images, int size, const char* where) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != size || s[2] != size || s[3] != 3)
    throw ShapeError(std::string(where) + ": expected (N," +
                     std::to_string(size) + "," + std::to_string(size) +
                     ",3) images, got " + shape_str(s));
}

Var tile_batch(const Var& single, int n) {
  // (1,H,W,C) -> (N,H,W,C) through a broadcast add against zeros
  Shape s = single.shape();
  s[0] = n;
  return add(single, Var::constant(Tensor(s)));
}

NormBranchKind kind_for_role(CodeRole role) {
  return role == CodeRole::StyleVector ? NormBranchKind::AdaIN
                                       : NormBranchKind::Spade;
}

}  // namespace

Tensor one_hot(const std::vector<int>& labels, int n_classes) {
  Tensor t({static_cast<int>(labels.size()), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw ConfigError("label " + std::to_string(labels[i]) +
                        " outside [0," + std::to_string(n_classes) + ")");
    t[i * static_cast<std::size_t>(n_classes) +
      static_cast<std::size_t>(labels[i])] = 1.0f;
  }
  return t;
}

void validate_one_hot(const Tensor& t, const char* where) {
  if (t.rank() != 2)
    throw ShapeError(std::string(where) + ": labels must be (N,K) one-hot, got " +
                     shape_str(t.shape()));
  const int n = t.dim(0), k = t.dim(1);
  for (int i = 0; i < n; ++i) {
    int ones = 0;
    for (int j = 0; j < k; ++j) {
      const float v = t[static_cast<std::size_t>(i) * k + j];
      if (v == 1.0f) {
        ++ones;
      } else if (v != 0.0f) {
        throw ConfigError(std::string(where) + ": row " + std::to_string(i) +
                          " is not one-hot (entry " + std::to_string(v) + ")");
      }
    }
    if (ones != 1)
      throw ConfigError(std::string(where) + ": row " + std::to_string(i) +
                        " has " + std::to_string(ones) + " ones");
  }
}

// ---- CondMap ----

CondMap::CondMap(int n_classes, int style_dim, int map_hw, CodeRole out_role,
                 RngState& rng)
    : n_classes_(n_classes),
      style_dim_(style_dim),
      map_hw_(map_hw),
      out_role_(out_role) {
  const int out_dim =
      out_role == CodeRole::StyleVector ? style_dim : map_hw * map_hw;
  w1_ = Var::param(randn({n_classes, 128}, 0.02f, rng));
  b1_ = Var::param(Tensor({128}));
  w2_ = Var::param(randn({128, 256}, 0.02f, rng));
  b2_ = Var::param(Tensor({256}));
  w3_ = Var::param(randn({256, out_dim}, 0.02f, rng));
  b3_ = Var::param(Tensor({out_dim}));
}

LatentCode CondMap::apply(const Var& onehot) const {
  validate_one_hot(onehot.value(), "cond_map");
  if (onehot.shape()[1] != n_classes_)
    throw ShapeError("cond_map: built for " + std::to_string(n_classes_) +
                     " classes, got " + shape_str(onehot.shape()));
  const int n = onehot.shape()[0];
  Var h = leaky_relu(linear(onehot, w1_, b1_));
  h = leaky_relu(linear(h, w2_, b2_));
  h = linear(h, w3_, b3_);
  Var shaped = out_role_ == CodeRole::StyleVector
                   ? reshape(h, {n, 1, 1, style_dim_})
                   : reshape(h, {n, map_hw_, map_hw_, 1});
  return LatentCode{out_role_, CodeOrigin::LabelRelevant, shaped};
}

void CondMap::collect(const std::string& prefix, ParamMap& out) const {
  out[prefix + ".w1"] = w1_;
  out[prefix + ".b1"] = b1_;
  out[prefix + ".w2"] = w2_;
  out[prefix + ".b2"] = b2_;
  out[prefix + ".w3"] = w3_;
  out[prefix + ".b3"] = b3_;
}

// ---- Encoder ----

Encoder::Encoder(const GeneratorSpec& spec, const RoutingConfig& routing,
                 RngState& rng)
    : spec_(spec), z_u_role_(routing.z_u_role) {
  const int b = spec.base_channels;
  const NormBranchKind zs_kind = kind_for_role(routing.z_s_role);
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    const int cout = b << i;
    Block blk;
    blk.w = Var::param(randn({3, 3, cin, cout}, 0.02f, rng));
    blk.b = Var::param(Tensor({cout}));
    blk.norm =
        CondNorm::make(cout, {zs_kind}, spec.style_dim, spec.spade_hidden, rng);
    blocks_.push_back(std::move(blk));
    cin = cout;
  }
  if (z_u_role_ == CodeRole::StyleVector) {
    mu_w_ = Var::param(randn({8 * b, spec.style_dim}, 0.02f, rng));
    mu_b_ = Var::param(Tensor({spec.style_dim}));
    lv_w_ = Var::param(randn({8 * b, spec.style_dim}, 0.02f, rng));
    lv_b_ = Var::param(Tensor({spec.style_dim}));
  } else {
    // 4x4 trunk -> 8x8 -> 16x16, then 1x1 conv to (mu, logvar)
    int c = 8 * b;
    for (int i = 0; i < 2; ++i) {
      const int cout = c / 2;
      Block blk;
      blk.w = Var::param(randn({3, 3, c, cout}, 0.02f, rng));
      blk.b = Var::param(Tensor({cout}));
      blk.norm = CondNorm::make(cout, {zs_kind}, spec.style_dim,
                                spec.spade_hidden, rng);
      up_.push_back(std::move(blk));
      c = cout;
    }
    head_w_ = Var::param(randn({1, 1, c, 2}, 0.02f, rng));
    head_b_ = Var::param(Tensor({2}));
  }
}

Posterior Encoder::apply(const Var& images, const LatentCode& z_s) const {
  check_image_batch(images, spec_.image_size, "encode");
  if (z_s.origin != CodeOrigin::LabelRelevant)
    throw ConfigError("encode: z_s must be the label-relevant code");
  const int n = images.shape()[0];
  Var h = images;
  for (const Block& blk : blocks_) {
    h = conv2d(h, blk.w, blk.b, 2, 1);
    h = blk.norm.apply(h, {&z_s});
    h = leaky_relu(h);
  }
  Posterior p;
  if (z_u_role_ == CodeRole::StyleVector) {
    Var pooled = reshape(global_avg_pool(h), {n, 8 * spec_.base_channels});
    p.mu = reshape(linear(pooled, mu_w_, mu_b_), {n, 1, 1, spec_.style_dim});
    p.logvar = clamp(
        reshape(linear(pooled, lv_w_, lv_b_), {n, 1, 1, spec_.style_dim}),
        -10.0f, 10.0f);
  } else {
    for (const Block& blk : up_) {
      h = upsample2x(h);
      h = conv2d(h, blk.w, blk.b, 1, 1);
      h = blk.norm.apply(h, {&z_s});
      h = leaky_relu(h);
    }
    Var head = conv2d(h, head_w_, head_b_, 1, 0);  // (N,16,16,2)
    p.mu = slice_ch(head, 0, 1);
    p.logvar = clamp(slice_ch(head, 1, 2), -10.0f, 10.0f);
  }
  return p;
}

void Encoder::collect(const std::string& prefix, ParamMap& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string bp = prefix + ".blk" + std::to_string(i);
    out[bp + ".w"] = blocks_[i].w;
    out[bp + ".b"] = blocks_[i].b;
    blocks_[i].norm.collect(bp + ".norm", out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const std::string bp = prefix + ".up" + std::to_string(i);
    out[bp + ".w"] = up_[i].w;
    out[bp + ".b"] = up_[i].b;
    up_[i].norm.collect(bp + ".norm", out);
  }
  if (head_w_.defined()) {
    out[prefix + ".head_w"] = head_w_;
    out[prefix + ".head_b"] = head_b_;
  }
  if (mu_w_.defined()) {
    out[prefix + ".mu_w"] = mu_w_;
    out[prefix + ".mu_b"] = mu_b_;
    out[prefix + ".lv_w"] = lv_w_;
    out[prefix + ".lv_b"] = lv_b_;
  }
}

// ---- Decoder ----

Decoder::Decoder(const GeneratorSpec& spec, const RoutingConfig& routing,
                 RngState& rng)
    : spec_(spec), routing_(routing) {
  const int b = spec.base_channels;
  const int c0 = 8 * b;
  const_input_ = Var::param(randn({1, 4, 4, c0}, 0.02f, rng));

  // norm branches: AdaIN-routed codes first, then SPADE-routed, z_s before
  // z_u within a kind (matches dual_norm's concat(adain, spade) order)
  std::vector<NormBranchKind> kinds;
  auto add_branch = [&](Route route, int which) {
    if (route == Route::AdaIN) {
      kinds.push_back(NormBranchKind::AdaIN);
      norm_code_of_branch_.push_back(which);
    }
  };
  add_branch(routing.z_s, 0);
  add_branch(routing.z_u, 1);
  auto add_spade = [&](Route route, int which) {
    if (route == Route::Spade) {
      kinds.push_back(NormBranchKind::Spade);
      norm_code_of_branch_.push_back(which);
    }
  };
  add_spade(routing.z_s, 0);
  add_spade(routing.z_u, 1);

  int extra = 0;
  if (routing.z_s == Route::DecInput)
    extra += routing.z_s_role == CodeRole::StyleVector ? spec.style_dim : 1;
  if (routing.z_u == Route::DecInput)
    extra += routing.z_u_role == CodeRole::StyleVector ? spec.style_dim : 1;

  int cin = c0 + extra;
  for (int i = 0; i < 4; ++i) {
    const int cout = c0 >> i;  // 8b, 4b, 2b, b
    Block blk;
    blk.w = Var::param(randn({3, 3, cin, cout}, 0.02f, rng));
    blk.b = Var::param(Tensor({cout}));
    blk.norm =
        CondNorm::make(cout, kinds, spec.style_dim, spec.spade_hidden, rng);
    blocks_.push_back(std::move(blk));
    cin = cout;
  }
  rgb_w_ = Var::param(randn({3, 3, b, 3}, 0.02f, rng));
  rgb_b_ = Var::param(Tensor({3}));
}

Var Decoder::apply(const LatentCode& z_s, const LatentCode& z_u) const {
  if (z_s.origin != CodeOrigin::LabelRelevant ||
      z_u.origin != CodeOrigin::LabelIrrelevant)
    throw ConfigError("decode: z_s must be label-relevant and z_u "
                      "label-irrelevant");
  if (z_s.role != routing_.z_s_role)
    throw ConfigError("decode: routing expects z_s as " +
                      role_name(routing_.z_s_role) + " (route " +
                      route_name(routing_.z_s) + "), got " +
                      role_name(z_s.role));
  if (z_u.role != routing_.z_u_role)
    throw ConfigError("decode: routing expects z_u as " +
                      role_name(routing_.z_u_role) + " (route " +
                      route_name(routing_.z_u) + "), got " +
                      role_name(z_u.role));
  const int n = z_s.values.shape()[0];

  std::vector<Var> input_parts = {tile_batch(const_input_, n)};
  auto dec_input_part = [&](const LatentCode& code) {
    if (code.role == CodeRole::StyleVector)
      input_parts.push_back(tile_hw(code.values, 4, 4));
    else
      input_parts.push_back(avg_pool(code.values, spec_.map_hw / 4));
  };
  if (routing_.z_s == Route::DecInput) dec_input_part(z_s);
  if (routing_.z_u == Route::DecInput) dec_input_part(z_u);

  Var h = input_parts.size() > 1 ? concat_ch(input_parts) : input_parts[0];

  std::vector<const LatentCode*> norm_codes;
  for (int which : norm_code_of_branch_)
    norm_codes.push_back(which == 0 ? &z_s : &z_u);

  for (const Block& blk : blocks_) {
    h = upsample2x(h);
    h = conv2d(h, blk.w, blk.b, 1, 1);
    h = blk.norm.apply(h, norm_codes);
    h = leaky_relu(h);
  }
  Var rgb = conv2d(h, rgb_w_, rgb_b_, 1, 1);
  // (1 - 1e-6) keeps the output strictly inside [-1, 1] even where the
  // float tanh saturates to exactly 1
  return scale(tanh(rgb), 1.0f - 1e-6f);
}

void Decoder::collect(const std::string& prefix, ParamMap& out) const {
  out[prefix + ".const_input"] = const_input_;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string bp = prefix + ".blk" + std::to_string(i);
    out[bp + ".w"] = blocks_[i].w;
    out[bp + ".b"] = blocks_[i].b;
    blocks_[i].norm.collect(bp + ".norm", out);
  }
  out[prefix + ".rgb_w"] = rgb_w_;
  out[prefix + ".rgb_b"] = rgb_b_;
}

// ---- Discriminator ----

Discriminator::Discriminator(const DiscriminatorSpec& spec,
                             std::uint64_t init_seed)
    : spec_(spec) {
  RngState rng(init_seed);
  const int b = spec.base_channels;
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    const int cout = b << i;
    ws_.push_back(Var::param(randn({3, 3, cin, cout}, 0.02f, rng)));
    bs_.push_back(Var::param(Tensor({cout})));
    cin = cout;
  }
  psi_w_ = Var::param(randn({8 * b, 1}, 0.02f, rng));
  psi_b_ = Var::param(Tensor({1}));
  embed_w_ = Var::param(randn({spec.n_classes, 8 * b}, 0.02f, rng));
}

Var Discriminator::score(const Var& images, const Var& onehot) const {
  check_image_batch(images, spec_.image_size, "discriminate");
  validate_one_hot(onehot.value(), "discriminate");
  const int n = images.shape()[0];
  Var h = images;
  for (std::size_t i = 0; i < ws_.size(); ++i)
    h = leaky_relu(conv2d(h, ws_[i], bs_[i], 2, 1));
  Var feat = reshape(global_avg_pool(h), {n, 8 * spec_.base_channels});
  Var base = linear(feat, psi_w_, psi_b_);              // (N,1)
  Var embed = matmul(onehot, embed_w_);                 // (N,8b)
  Var proj = reduce_sum(mul(feat, embed), {1});         // (N,1)
  return add(base, proj);
}

void Discriminator::collect(ParamMap& out) const {
  for (std::size_t i = 0; i < ws_.size(); ++i) {
    out["d.blk" + std::to_string(i) + ".w"] = ws_[i];
    out["d.blk" + std::to_string(i) + ".b"] = bs_[i];
  }
  out["d.psi_w"] = psi_w_;
  out["d.psi_b"] = psi_b_;
  out["d.embed_w"] = embed_w_;
}

// ---- Generator ----

Generator::Generator(const GeneratorSpec& spec, std::uint64_t init_seed)
    : spec_(spec), routing_(make_routing(spec.preset, spec.labels.kind)) {
  if (spec.image_size != 64)
    throw ConfigError("generator: only 64x64 images are supported, got " +
                      std::to_string(spec.image_size));
  if (spec.map_hw * 4 != spec.image_size)
    throw ConfigError("generator: spatial code must be image_size/4 per side");
  if (spec.labels.n_classes < 2)
    throw ConfigError("generator: need at least 2 classes");
  RngState rng(init_seed);
  f_ = CondMap(spec.labels.n_classes, spec.style_dim, spec.map_hw,
               routing_.z_s_role, rng);
  enc_ = Encoder(spec, routing_, rng);
  dec_ = Decoder(spec, routing_, rng);
}

LatentCode Generator::cond_map(const Var& onehot) const {
  return f_.apply(onehot);
}

Posterior Generator::encode(const Var& images, const LatentCode& z_s) const {
  return enc_.apply(images, z_s);
}

Var Generator::decode(const LatentCode& z_s, const LatentCode& z_u) const {
  return dec_.apply(z_s, z_u);
}

LatentCode Generator::posterior_code(const Posterior& p, RngState& rng) const {
  Var z = sample_gaussian(p.mu, p.logvar, rng);
  return LatentCode{routing_.z_u_role, CodeOrigin::LabelIrrelevant, z};
}

LatentCode Generator::prior_code(int batch, RngState& rng) const {
  Shape s = routing_.z_u_role == CodeRole::StyleVector
                ? Shape{batch, 1, 1, spec_.style_dim}
                : Shape{batch, spec_.map_hw, spec_.map_hw, 1};
  return LatentCode{routing_.z_u_role, CodeOrigin::LabelIrrelevant,
                    Var::constant(randn(s, 1.0f, rng))};
}

Var Generator::exchange(const Var& images, const Var& onehot_source,
                        const Var& onehot_target, RngState& rng) const {
  LatentCode zs_src = cond_map(onehot_source);
  Posterior post = encode(images, zs_src);
  LatentCode z_u = posterior_code(post, rng);
  LatentCode zs_tgt = cond_map(onehot_target);
  return decode(zs_tgt, z_u);
}

void Generator::collect(ParamMap& out) const {
  f_.collect("f", out);
  enc_.collect("enc", out);
  dec_.collect("dec", out);
}

}  // namespace dcvae
