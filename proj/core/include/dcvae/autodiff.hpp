#pragma once

#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "dcvae/rng.hpp"
#include "dcvae/tensor.hpp"

namespace dcvae {

// Reverse-mode autodiff over a dynamically built graph. Each op returns a new
// node holding its value; backward() walks the graph in reverse topological
// order and accumulates gradients into every node that requires them.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  bool trainable = false;  // parameter leaf
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";

  Tensor& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node(std::move(n)) {}

  static Var constant(Tensor v);
  static Var param(Tensor v);  // trainable leaf

  bool defined() const { return node != nullptr; }
  const Tensor& value() const { return node->value; }
  Tensor& value_mut() { return node->value; }
  const Shape& shape() const { return node->value.shape(); }
  Tensor& grad() { return node->ensure_grad(); }
  bool requires_grad() const { return node && node->requires_grad; }

  NodePtr node;
};

// Populates .grad on every node reachable from `loss` that requires
// gradients. `loss` must hold exactly one element.
void backward(const Var& loss);

// Disables graph recording while alive; values still flow. Used on
// inference/eval paths to skip tape bookkeeping.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// New constant leaf sharing the value (cuts the graph).
Var detach(const Var& v);

// ---- elementwise (restricted broadcasting: equal ranks, dims equal or 1) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, float slope = 0.2f);
Var clamp(const Var& a, float lo, float hi);

// ---- reductions ----
Var reduce_mean(const Var& a, const std::vector<int>& axes);  // keeps dims
Var reduce_sum(const Var& a, const std::vector<int>& axes);   // keeps dims
Var mean_all(const Var& a);  // -> shape {1}
Var sum_all(const Var& a);   // -> shape {1}

// population statistics with std = sqrt(var + 1e-5)
std::pair<Var, Var> moments(const Var& a, const std::vector<int>& axes);

// ---- shape ----
Var reshape(const Var& a, Shape shape);
Var concat_ch(const std::vector<Var>& parts);     // along last axis
Var slice_ch(const Var& a, int from, int to);     // last-axis slice [from,to)
Var tile_hw(const Var& a, int h, int w);          // (N,1,1,C) -> (N,h,w,C)
Var nearest_resize(const Var& a, int h, int w);   // NHWC nearest-neighbor
Var upsample2x(const Var& a);                     // NHWC nearest x2
Var avg_pool(const Var& a, int k);                // non-overlapping k x k
Var global_avg_pool(const Var& a);                // (N,H,W,C) -> (N,1,1,C)

// ---- dense / conv ----
Var linear(const Var& x, const Var& w, const Var& b);  // (N,I)x(I,O)+(O)
Var matmul(const Var& a, const Var& b);                // (M,K)x(K,N)
// x: NHWC, w: (KH,KW,Cin,Cout), b: (Cout) or undefined Var for no bias
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// ---- heads ----
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

// reparameterized draw from N(mu, exp(logvar)); gradient flows to mu/logvar
Var sample_gaussian(const Var& mu, const Var& logvar, RngState& rng);

// Number of BLAS threads used by dense kernels (default 1).
void set_compute_threads(int n);

// Gaussian-initialized tensor, the standard parameter init here.
Tensor randn(const Shape& shape, float stddev, RngState& rng);

// Named trainable parameters, ordered by name for stable serialization.
using ParamMap = std::map<std::string, Var>;

}  // namespace dcvae
