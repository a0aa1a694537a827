#include "dcvae/losses.hpp"

#include <numeric>

namespace dcvae {

Var kl_to_standard_normal(const Posterior& p) {
  if (p.mu.shape() != p.logvar.shape())
    throw ShapeError("kl: mu " + shape_str(p.mu.shape()) + " vs logvar " +
                     shape_str(p.logvar.shape()));
  const int n = p.mu.shape()[0];
  Var term = sub(sub(add(mul(p.mu, p.mu), exp(p.logvar)),
                     Var::constant(Tensor(p.mu.shape(), 1.0f))),
                 p.logvar);
  return scale(sum_all(term), 0.5f / static_cast<float>(n));
}

Var recon_loss(const Var& x, const Var& x_hat) {
  if (x.shape() != x_hat.shape())
    throw ShapeError("recon_loss: " + shape_str(x.shape()) + " vs " +
                     shape_str(x_hat.shape()));
  return mean_all(abs(sub(x, x_hat)));
}

namespace {
Var hinge_real(const Var& s) { return mean_all(relu(add_scalar(neg(s), 1.0f))); }
Var hinge_fake(const Var& s) { return mean_all(relu(add_scalar(s, 1.0f))); }
}  // namespace

Var d_adv_loss(const BatchScores& s) {
  return add(add(hinge_real(s.real), hinge_fake(s.reconstructed)),
             add(hinge_fake(s.exchanged), hinge_fake(s.prior_sampled)));
}

Var g_adv_loss(const Var& reconstructed, const Var& exchanged,
               const Var& prior_sampled) {
  return neg(add(add(mean_all(reconstructed), mean_all(exchanged)),
                 mean_all(prior_sampled)));
}

Var g_total_loss(const Var& x, const Var& x_hat, const Posterior& p,
                 const Var& rec_scores, const Var& ex_scores,
                 const Var& prior_scores, const LossWeights& w) {
  if (w.rec < 0 || w.kl < 0 || w.adv < 0)
    throw ConfigError("loss weights must be non-negative");
  Var total = scale(recon_loss(x, x_hat), w.rec);
  total = add(total, scale(kl_to_standard_normal(p), w.kl));
  total = add(total, scale(g_adv_loss(rec_scores, ex_scores, prior_scores),
                           w.adv));
  return total;
}

std::vector<int> exchange_labels(const std::vector<int>& labels, int n_classes,
                                 RngState& rng) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(static_cast<std::uint32_t>(i))]);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = labels[idx[i]];
  if (n_classes > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] == labels[i]) {
        int v = static_cast<int>(rng.below(static_cast<std::uint32_t>(n_classes - 1)));
        if (v >= labels[i]) ++v;
        out[i] = v;
      }
    }
  }
  return out;
}

}  // namespace dcvae
