#pragma once

#include <vector>

#include "dcvae/networks.hpp"

namespace dcvae {

struct LossWeights {
  float rec = 10.0f;
  float kl = 0.05f;
  float adv = 1.0f;
};

// Scores from one discriminator state on the four streams of a step.
struct BatchScores {
  Var real;
  Var reconstructed;
  Var exchanged;
  Var prior_sampled;
};

// mean over batch of 1/2 sum_dims(mu^2 + e^logvar - 1 - logvar); the z_s
// term of the ELBO is identically zero under the deterministic-z_s
// assumption and is not computed.
Var kl_to_standard_normal(const Posterior& p);

// mean absolute error over all elements
Var recon_loss(const Var& x, const Var& x_hat);

// hinge loss over real + three fake streams:
// mean max(0,1-real) + mean max(0,1+rec) + mean max(0,1+ex) + mean max(0,1+prior)
Var d_adv_loss(const BatchScores& s);

// generator complement: -(mean rec + mean ex + mean prior)
Var g_adv_loss(const Var& reconstructed, const Var& exchanged,
               const Var& prior_sampled);

Var g_total_loss(const Var& x, const Var& x_hat, const Posterior& p,
                 const Var& rec_scores, const Var& ex_scores,
                 const Var& prior_scores, const LossWeights& w);

// Exchange targets c': a shuffle of the batch's own labels, with positions
// where c' == c redrawn from the other classes (noop when n_classes == 1).
std::vector<int> exchange_labels(const std::vector<int>& labels, int n_classes,
                                 RngState& rng);

}  // namespace dcvae
