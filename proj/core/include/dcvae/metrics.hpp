#pragma once

#include <cstdint>
#include <vector>

#include "dcvae/tensor.hpp"

namespace dcvae {

// Flattened diagonal Gaussian posterior for metric evaluation.
struct BankEntry {
  std::vector<float> mu;
  std::vector<float> logvar;
  int class_id = 0;
};

struct PosteriorBank {
  std::vector<BankEntry> entries;
  int n_classes = 0;
  int dim = 0;
};

struct MiEstimate {
  double nats = 0;  // clamped at zero
  double raw = 0;   // pre-clamp Monte-Carlo estimate
};

// I(z_u; c) = (1/N_C) sum_c E_{q(z|c)} log q(z|c)/q(z), with q(z|c) the
// equal-weight mixture of the class's posteriors and q(z) the equal-class-
// weight mixture of those mixtures. Monte Carlo with S samples per class,
// densities evaluated by log-sum-exp in double precision.
MiEstimate mutual_information(const PosteriorBank& bank, int samples_per_class,
                              std::uint64_t seed);

// Label predictions + penultimate features over [-1,1] image batches.
class LabelPredictor {
 public:
  virtual ~LabelPredictor() = default;
  virtual int n_classes() const = 0;
  virtual std::vector<int> predict(const Tensor& images) const = 0;
  virtual Tensor features(const Tensor& images) const = 0;  // (N, d)
};

double accuracy(const Tensor& images, const std::vector<int>& targets,
                const LabelPredictor& classifier);

// Frechet distance between Gaussian fits of two feature sets (rows =
// samples). Matrix square roots via symmetric eigendecomposition with
// eigenvalue floor 1e-10. Both sets need at least d+1 rows.
double feature_frechet(const Tensor& a, const Tensor& b);

}  // namespace dcvae
