#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcvae/checkpoint.hpp"

namespace dcvae {

// Adam with bias correction; grads are checked finite before applying.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamMap& params, float lr, float beta1, float beta2,
       float eps = 1e-8f);

  void zero_grad();
  void step();  // throws NumericError on non-finite gradients

  std::int64_t step_count() const { return t_; }

  // optimizer state as named tensors under `prefix` (m/v buffers + counter)
  void collect_state(const std::string& prefix, TensorMap& out) const;
  void load_state(const std::string& prefix, const TensorMap& in);

 private:
  struct Slot {
    std::string name;
    Var param;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  float lr_ = 2e-4f, b1_ = 0.5f, b2_ = 0.999f, eps_ = 1e-8f;
  std::int64_t t_ = 0;
};

}  // namespace dcvae
