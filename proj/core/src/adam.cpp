#include "dcvae/adam.hpp"

#include <cmath>

namespace dcvae {

Adam::Adam(const ParamMap& params, float lr, float beta1, float beta2,
           float eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, var] : params) {
    if (!var.defined()) throw ConfigError("Adam: undefined parameter " + name);
    slots_.push_back({name, var, Tensor(var.shape()), Tensor(var.shape())});
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) {
    Tensor& g = s.param.grad();
    std::fill(g.vec().begin(), g.vec().end(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const float c1 = 1.0f - std::pow(b1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(b2_, static_cast<float>(t_));
  for (Slot& s : slots_) {
    const Tensor& g = s.param.grad();
    if (!g.all_finite())
      throw NumericError("non-finite gradient for parameter '" + s.name + "'");
    float* p = s.param.value_mut().data();
    float* m = s.m.data();
    float* v = s.v.data();
    const float* gd = g.data();
    for (std::size_t i = 0; i < s.m.numel(); ++i) {
      m[i] = b1_ * m[i] + (1.0f - b1_) * gd[i];
      v[i] = b2_ * v[i] + (1.0f - b2_) * gd[i] * gd[i];
      const float mhat = m[i] / c1;
      const float vhat = v[i] / c2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::collect_state(const std::string& prefix, TensorMap& out) const {
  for (const Slot& s : slots_) {
    out[prefix + ".m." + s.name] = s.m;
    out[prefix + ".v." + s.name] = s.v;
  }
  out[prefix + ".t"] = Tensor::scalar(static_cast<float>(t_));
}

void Adam::load_state(const std::string& prefix, const TensorMap& in) {
  for (Slot& s : slots_) {
    auto im = in.find(prefix + ".m." + s.name);
    auto iv = in.find(prefix + ".v." + s.name);
    if (im == in.end() || iv == in.end())
      throw IoError("optimizer state missing for '" + s.name + "'");
    if (im->second.shape() != s.m.shape() ||
        iv->second.shape() != s.v.shape())
      throw IoError("optimizer state shape mismatch for '" + s.name + "'");
    s.m = im->second;
    s.v = iv->second;
  }
  auto it = in.find(prefix + ".t");
  if (it == in.end()) throw IoError("optimizer step counter missing");
  t_ = static_cast<std::int64_t>(it->second.item());
}

}  // namespace dcvae
