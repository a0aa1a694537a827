#pragma once

#include <string>

#include "dcvae/autodiff.hpp"
#include "dcvae/metrics.hpp"

namespace dcvae {

// Small conv classifier used for Acc evaluation and as the feature space of
// the Frechet distance: three stride-2 blocks, 64-d penultimate (global
// average pool), linear head.
class ConvClassifier : public LabelPredictor {
 public:
  ConvClassifier() = default;
  ConvClassifier(int n_classes, std::uint64_t init_seed);

  Var logits(const Var& images) const;
  Var penultimate(const Var& images) const;  // (N, 64)

  int n_classes() const override { return n_classes_; }
  std::vector<int> predict(const Tensor& images) const override;
  Tensor features(const Tensor& images) const override;

  void collect(ParamMap& out) const;
  void save(const std::string& path) const;
  static ConvClassifier load(const std::string& path);

  static constexpr int kFeatureDim = 64;

 private:
  std::vector<Var> ws_, bs_;  // conv blocks 3->16->32->64
  Var head_w_, head_b_;
  int n_classes_ = 0;
};

}  // namespace dcvae
