#include "dcvae/autodiff.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

extern "C" void openblas_set_num_threads(int);

namespace dcvae {

void set_compute_threads(int n) {
  openblas_set_num_threads(n < 1 ? 1 : n);
}

Tensor randn(const Shape& shape, float stddev, RngState& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normal();
  return t;
}

Tensor& Node::ensure_grad() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return Var(std::move(n));
}

Var Var::param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->trainable = true;
  return Var(std::move(n));
}

Var detach(const Var& v) { return Var::constant(v.value()); }

namespace {
bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace {

Var make_node(Tensor value, std::vector<NodePtr> parents,
              std::function<void(Node&)> backprop, const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Var(std::move(n));
}

void add_into(Tensor& dst, const Tensor& src) {
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

// ---- broadcasting over equal-rank shapes (each dim equal or 1) ----

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      throw ShapeError(std::string(op) + ": incompatible shapes " +
                       shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 0);
  std::size_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  }
  return st;
}

// strides with 0 where the operand is broadcast along that dim
std::vector<std::size_t> bcast_strides(const Shape& s, const Shape& out) {
  auto st = contiguous_strides(s);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

template <class F>
void bcast_apply(const Shape& out, const float* a,
                 const std::vector<std::size_t>& sa, const float* b,
                 const std::vector<std::size_t>& sb, float* o, F f) {
  const std::size_t rank = out.size();
  if (rank == 0) {
    o[0] = f(a[0], b[0]);
    return;
  }
  // recursive walk; innermost dim is a tight loop
  struct Walker {
    const Shape& out;
    const std::vector<std::size_t>&sa, &sb;
    F f;
    void run(std::size_t d, const float* a, const float* b, float*& o) {
      const int n = out[d];
      if (d + 1 == out.size()) {
        const std::size_t ka = sa[d], kb = sb[d];
        for (int i = 0; i < n; ++i)
          *o++ = f(a[static_cast<std::size_t>(i) * ka],
                   b[static_cast<std::size_t>(i) * kb]);
        return;
      }
      for (int i = 0; i < n; ++i)
        run(d + 1, a + static_cast<std::size_t>(i) * sa[d],
            b + static_cast<std::size_t>(i) * sb[d], o);
    }
  } w{out, sa, sb, f};
  w.run(0, a, b, o);
}

// Reduce `g` (shaped like `out`) down to `target` by summing broadcast dims.
Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r(target);
  auto st = bcast_strides(target, g.shape());
  const auto out_st = contiguous_strides(g.shape());
  const std::size_t rank = g.shape().size();
  // walk g, accumulate into r at broadcast offsets
  std::vector<int> idx(rank, 0);
  const float* gd = g.data();
  float* rd = r.data();
  for (std::size_t li = 0; li < g.numel(); ++li) {
    std::size_t ro = 0;
    for (std::size_t d = 0; d < rank; ++d)
      ro += static_cast<std::size_t>(idx[d]) * st[d];
    rd[ro] += gd[li];
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] <
          g.shape()[static_cast<std::size_t>(d)])
        break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  (void)out_st;
  return r;
}

template <class FVal, class FDa, class FDb>
Var binary_op(const Var& a, const Var& b, FVal fv, FDa fda, FDb fdb,
              const char* op) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  Tensor out(out_shape);
  auto sa = bcast_strides(a.shape(), out_shape);
  auto sb = bcast_strides(b.shape(), out_shape);
  bcast_apply(out_shape, a.value().data(), sa, b.value().data(), sb,
              out.data(), fv);
  NodePtr pa = a.node, pb = b.node;
  return make_node(
      std::move(out), {pa, pb},
      [pa, pb, sa, sb, fda, fdb](Node& n) {
        const Shape& os = n.value.shape();
        if (pa->requires_grad) {
          Tensor ga(os);
          // ga = fda(a, b) * g elementwise over broadcast operands
          struct {
            const float* g;
            std::size_t i = 0;
          } ctx{n.grad.data()};
          bcast_apply(os, pa->value.data(), sa, pb->value.data(), sb,
                      ga.data(), [&ctx, fda](float x, float y) {
                        return fda(x, y) * ctx.g[ctx.i++];
                      });
          add_into(pa->ensure_grad(), reduce_to_shape(ga, pa->value.shape()));
        }
        if (pb->requires_grad) {
          Tensor gb(os);
          struct {
            const float* g;
            std::size_t i = 0;
          } ctx{n.grad.data()};
          bcast_apply(os, pa->value.data(), sa, pb->value.data(), sb,
                      gb.data(), [&ctx, fdb](float x, float y) {
                        return fdb(x, y) * ctx.g[ctx.i++];
                      });
          add_into(pb->ensure_grad(), reduce_to_shape(gb, pb->value.shape()));
        }
      },
      op);
}

template <class FVal, class FDer>
Var unary_op(const Var& a, FVal fv, FDer fd, const char* op) {
  Tensor out(a.shape());
  const float* x = a.value().data();
  float* o = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) o[i] = fv(x[i]);
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa, fd](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const float* x = pa->value.data();
        const float* y = n.value.data();
        const float* g = n.grad.data();
        float* gd = ga.data();
        for (std::size_t i = 0; i < ga.numel(); ++i)
          gd[i] += fd(x[i], y[i]) * g[i];
      },
      op);
}

}  // namespace

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](float x, float y) { return x + y; },
      [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; },
      "add");
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](float x, float y) { return x - y; },
      [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; },
      "mul");
}

Var div(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; },
      [](float x, float y) { return -x / (y * y); }, "div");
}

Var neg(const Var& a) { return scale(a, -1.0f); }

Var scale(const Var& a, float s) {
  return unary_op(
      a, [s](float x) { return x * s; }, [s](float, float) { return s; },
      "scale");
}

Var add_scalar(const Var& a, float s) {
  return unary_op(
      a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; },
      "add_scalar");
}

Var exp(const Var& a) {
  return unary_op(
      a, [](float x) { return std::exp(x); },
      [](float, float y) { return y; }, "exp");
}

Var log(const Var& a) {
  return unary_op(
      a, [](float x) { return std::log(x); },
      [](float x, float) { return 1.0f / x; }, "log");
}

Var sqrt(const Var& a) {
  return unary_op(
      a, [](float x) { return std::sqrt(x); },
      [](float, float y) { return 0.5f / y; }, "sqrt");
}

Var abs(const Var& a) {
  return unary_op(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); },
      "abs");
}

Var tanh(const Var& a) {
  return unary_op(
      a, [](float x) { return std::tanh(x); },
      [](float, float y) { return 1.0f - y * y; }, "tanh");
}

Var relu(const Var& a) {
  return unary_op(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; }, "relu");
}

Var leaky_relu(const Var& a, float slope) {
  return unary_op(
      a, [slope](float x) { return x > 0.0f ? x : slope * x; },
      [slope](float x, float) { return x > 0.0f ? 1.0f : slope; },
      "leaky_relu");
}

Var clamp(const Var& a, float lo, float hi) {
  return unary_op(
      a, [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](float x, float) { return (x > lo && x < hi) ? 1.0f : 0.0f; },
      "clamp");
}

// ---- reductions ----

namespace {

Shape reduced_shape(const Shape& in, const std::vector<int>& axes,
                    const char* op) {
  if (axes.empty())
    throw ShapeError(std::string(op) + ": empty reduction axis set");
  Shape out = in;
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(in.size()))
      throw ShapeError(std::string(op) + ": axis " + std::to_string(ax) +
                       " out of range for " + shape_str(in));
    out[static_cast<std::size_t>(ax)] = 1;
  }
  return out;
}

Var reduce_impl(const Var& a, const std::vector<int>& axes, bool mean,
                const char* op) {
  Shape out_shape = reduced_shape(a.shape(), axes, op);
  const std::size_t count = a.value().numel() / shape_numel(out_shape);
  Tensor out(out_shape);
  {
    // accumulate input into the (stride-0 along reduced dims) output
    auto so = bcast_strides(out_shape, a.shape());
    const std::size_t rank = a.shape().size();
    std::vector<int> idx(rank, 0);
    const float* x = a.value().data();
    float* o = out.data();
    for (std::size_t li = 0; li < a.value().numel(); ++li) {
      std::size_t oo = 0;
      for (std::size_t d = 0; d < rank; ++d)
        oo += static_cast<std::size_t>(idx[d]) * so[d];
      o[oo] += x[li];
      for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
        if (++idx[static_cast<std::size_t>(d)] <
            a.shape()[static_cast<std::size_t>(d)])
          break;
        idx[static_cast<std::size_t>(d)] = 0;
      }
    }
    if (mean) {
      const float inv = 1.0f / static_cast<float>(count);
      for (std::size_t i = 0; i < out.numel(); ++i) o[i] *= inv;
    }
  }
  NodePtr pa = a.node;
  const float w = mean ? 1.0f / static_cast<float>(count) : 1.0f;
  return make_node(
      std::move(out), {pa},
      [pa, w](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        auto so = bcast_strides(n.value.shape(), pa->value.shape());
        const std::size_t rank = pa->value.shape().size();
        std::vector<int> idx(rank, 0);
        const float* g = n.grad.data();
        float* gd = ga.data();
        for (std::size_t li = 0; li < ga.numel(); ++li) {
          std::size_t oo = 0;
          for (std::size_t d = 0; d < rank; ++d)
            oo += static_cast<std::size_t>(idx[d]) * so[d];
          gd[li] += w * g[oo];
          for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] <
                pa->value.shape()[static_cast<std::size_t>(d)])
              break;
            idx[static_cast<std::size_t>(d)] = 0;
          }
        }
      },
      op);
}

}  // namespace

Var reduce_mean(const Var& a, const std::vector<int>& axes) {
  return reduce_impl(a, axes, true, "reduce_mean");
}

Var reduce_sum(const Var& a, const std::vector<int>& axes) {
  return reduce_impl(a, axes, false, "reduce_sum");
}

Var sum_all(const Var& a) {
  double s = 0.0;
  const float* x = a.value().data();
  for (std::size_t i = 0; i < a.value().numel(); ++i) s += x[i];
  Tensor out({1}, {static_cast<float>(s)});
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const float g = n.grad[0];
        float* gd = ga.data();
        for (std::size_t i = 0; i < ga.numel(); ++i) gd[i] += g;
      },
      "sum_all");
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0f / static_cast<float>(a.value().numel()));
}

std::pair<Var, Var> moments(const Var& a, const std::vector<int>& axes) {
  Var mean = reduce_mean(a, axes);
  Var centered = sub(a, mean);
  Var var = reduce_mean(mul(centered, centered), axes);
  Var std = dcvae::sqrt(add_scalar(var, 1e-5f));
  return {mean, std};
}

// ---- shape ops ----

Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a.value().numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  Tensor out(shape, a.value().vec());
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        add_into(ga, Tensor(pa->value.shape(), n.grad.vec()));
      },
      "reshape");
}

Var concat_ch(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_ch: no inputs");
  const Shape& s0 = parts[0].shape();
  const std::size_t rank = s0.size();
  int total_c = 0;
  for (const Var& p : parts) {
    if (p.shape().size() != rank)
      throw ShapeError("concat_ch: rank mismatch");
    for (std::size_t d = 0; d + 1 < rank; ++d)
      if (p.shape()[d] != s0[d])
        throw ShapeError("concat_ch: leading dims differ: " + shape_str(s0) +
                         " vs " + shape_str(p.shape()));
    total_c += p.shape().back();
  }
  Shape out_shape = s0;
  out_shape.back() = total_c;
  Tensor out(out_shape);
  const std::size_t rows = out.numel() / static_cast<std::size_t>(total_c);
  {
    float* o = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (const Var& p : parts) {
        const int c = p.shape().back();
        std::memcpy(o, p.value().data() + r * static_cast<std::size_t>(c),
                    static_cast<std::size_t>(c) * sizeof(float));
        o += c;
      }
    }
  }
  std::vector<NodePtr> ps;
  for (const Var& p : parts) ps.push_back(p.node);
  return make_node(
      std::move(out), ps,
      [ps, rows, total_c](Node& n) {
        const float* g = n.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const float* gr = g + r * static_cast<std::size_t>(total_c);
          for (const auto& p : ps) {
            const int c = p->value.shape().back();
            if (p->requires_grad) {
              float* gd =
                  p->ensure_grad().data() + r * static_cast<std::size_t>(c);
              for (int i = 0; i < c; ++i) gd[i] += gr[i];
            }
            gr += c;
          }
        }
      },
      "concat_ch");
}

Var slice_ch(const Var& a, int from, int to) {
  const Shape& s = a.shape();
  const int c = s.back();
  if (from < 0 || to > c || from >= to)
    throw ShapeError("slice_ch: range [" + std::to_string(from) + "," +
                     std::to_string(to) + ") invalid for " + shape_str(s));
  Shape out_shape = s;
  out_shape.back() = to - from;
  Tensor out(out_shape);
  const std::size_t rows = a.value().numel() / static_cast<std::size_t>(c);
  const int width = to - from;
  for (std::size_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * static_cast<std::size_t>(width),
                a.value().data() + r * static_cast<std::size_t>(c) + from,
                static_cast<std::size_t>(width) * sizeof(float));
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa, from, width, rows, c](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const float* g = n.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          float* gd = ga.data() + r * static_cast<std::size_t>(c) + from;
          const float* gr = g + r * static_cast<std::size_t>(width);
          for (int i = 0; i < width; ++i) gd[i] += gr[i];
        }
      },
      "slice_ch");
}

Var tile_hw(const Var& a, int h, int w) {
  const Shape& s = a.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != 1)
    throw ShapeError("tile_hw: expected (N,1,1,C), got " + shape_str(s));
  const int n = s[0], c = s[3];
  Tensor out({n, h, w, c});
  for (int b = 0; b < n; ++b) {
    const float* src =
        a.value().data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
    float* dst = out.data() +
                 static_cast<std::size_t>(b) * static_cast<std::size_t>(h) *
                     static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
    for (int i = 0; i < h * w; ++i)
      std::memcpy(dst + static_cast<std::size_t>(i) * c, src,
                  static_cast<std::size_t>(c) * sizeof(float));
  }
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa, h, w](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const int nb = pa->value.shape()[0], c = pa->value.shape()[3];
        const float* g = n.grad.data();
        for (int b = 0; b < nb; ++b) {
          float* gd = ga.data() + static_cast<std::size_t>(b) * c;
          for (int i = 0; i < h * w; ++i) {
            const float* gr =
                g + (static_cast<std::size_t>(b) * h * w + i) * c;
            for (int k = 0; k < c; ++k) gd[k] += gr[k];
          }
        }
      },
      "tile_hw");
}

Var nearest_resize(const Var& a, int h, int w) {
  const Shape& s = a.shape();
  if (s.size() != 4)
    throw ShapeError("nearest_resize: expected NHWC, got " + shape_str(s));
  const int n = s[0], ih = s[1], iw = s[2], c = s[3];
  Tensor out({n, h, w, c});
  std::vector<int> map_h(static_cast<std::size_t>(h)),
      map_w(static_cast<std::size_t>(w));
  for (int i = 0; i < h; ++i) map_h[static_cast<std::size_t>(i)] = i * ih / h;
  for (int j = 0; j < w; ++j) map_w[static_cast<std::size_t>(j)] = j * iw / w;
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        std::memcpy(
            &out.at(b, i, j, 0),
            a.value().data() +
                ((static_cast<std::size_t>(b) * ih +
                  map_h[static_cast<std::size_t>(i)]) *
                     iw +
                 map_w[static_cast<std::size_t>(j)]) *
                    c,
            static_cast<std::size_t>(c) * sizeof(float));
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa, h, w, map_h, map_w](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const Shape& is = pa->value.shape();
        const int nb = is[0], ih = is[1], iw = is[2], c = is[3];
        const float* g = n.grad.data();
        for (int b = 0; b < nb; ++b)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
              float* gd =
                  ga.data() + ((static_cast<std::size_t>(b) * ih +
                                map_h[static_cast<std::size_t>(i)]) *
                                   iw +
                               map_w[static_cast<std::size_t>(j)]) *
                                  c;
              const float* gr =
                  g + ((static_cast<std::size_t>(b) * h + i) * w + j) * c;
              for (int k = 0; k < c; ++k) gd[k] += gr[k];
            }
      },
      "nearest_resize");
}

Var upsample2x(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 4)
    throw ShapeError("upsample2x: expected NHWC, got " + shape_str(s));
  return nearest_resize(a, s[1] * 2, s[2] * 2);
}

Var avg_pool(const Var& a, int k) {
  const Shape& s = a.shape();
  if (s.size() != 4)
    throw ShapeError("avg_pool: expected NHWC, got " + shape_str(s));
  if (s[1] % k != 0 || s[2] % k != 0)
    throw ShapeError("avg_pool: extent not divisible by window " +
                     std::to_string(k) + ": " + shape_str(s));
  const int n = s[0], h = s[1] / k, w = s[2] / k, c = s[3];
  Tensor out({n, h, w, c});
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const float* src = a.value().data() +
                               ((static_cast<std::size_t>(b) * s[1] +
                                 (i * k + kh)) *
                                    s[2] +
                                (j * k + kw)) *
                                   c;
            float* dst = &out.at(b, i, j, 0);
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch] * inv;
          }
  NodePtr pa = a.node;
  return make_node(
      std::move(out), {pa},
      [pa, k, inv](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& ga = pa->ensure_grad();
        const Shape& is = pa->value.shape();
        const int nb = is[0], ih = is[1], iw = is[2], c = is[3];
        const int h = ih / k, w = iw / k;
        const float* g = n.grad.data();
        for (int b = 0; b < nb; ++b)
          for (int i = 0; i < ih; ++i)
            for (int j = 0; j < iw; ++j) {
              const float* gr =
                  g + ((static_cast<std::size_t>(b) * h + i / k) * w + j / k) *
                          c;
              float* gd =
                  ga.data() + ((static_cast<std::size_t>(b) * ih + i) * iw + j) * c;
              for (int ch = 0; ch < c; ++ch) gd[ch] += gr[ch] * inv;
            }
      },
      "avg_pool");
}

Var global_avg_pool(const Var& a) { return reduce_mean(a, {1, 2}); }

// ---- dense / conv ----

namespace {

void sgemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
           int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " +
                     shape_str(sb));
  const int m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  sgemm(false, false, m, n, k, 1.0f, a.value().data(), k, b.value().data(), n,
        0.0f, out.data(), n);
  NodePtr pa = a.node, pb = b.node;
  return make_node(
      std::move(out), {pa, pb},
      [pa, pb, m, n, k](Node& nd) {
        const float* g = nd.grad.data();
        if (pa->requires_grad)
          sgemm(false, true, m, k, n, 1.0f, g, n, pb->value.data(), n, 1.0f,
                pa->ensure_grad().data(), k);
        if (pb->requires_grad)
          sgemm(true, false, k, n, m, 1.0f, pa->value.data(), k, g, n, 1.0f,
                pb->ensure_grad().data(), n);
      },
      "matmul");
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0])
    throw ShapeError("linear: incompatible shapes " + shape_str(sx) + " x " +
                     shape_str(sw));
  const int m = sx[0], k = sx[1], n = sw[1];
  if (b.defined() &&
      !(b.shape().size() == 1 && b.shape()[0] == n))
    throw ShapeError("linear: bias shape " + shape_str(b.shape()) +
                     " does not match output width " + std::to_string(n));
  Tensor out({m, n});
  sgemm(false, false, m, n, k, 1.0f, x.value().data(), k, w.value().data(), n,
        0.0f, out.data(), n);
  if (b.defined()) {
    float* o = out.data();
    const float* bias = b.value().data();
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) o[static_cast<std::size_t>(r) * n + c] += bias[c];
  }
  NodePtr px = x.node, pw = w.node, pb = b.defined() ? b.node : nullptr;
  std::vector<NodePtr> parents = {px, pw};
  if (pb) parents.push_back(pb);
  return make_node(
      std::move(out), parents,
      [px, pw, pb, m, n, k](Node& nd) {
        const float* g = nd.grad.data();
        if (px->requires_grad)
          sgemm(false, true, m, k, n, 1.0f, g, n, pw->value.data(), n, 1.0f,
                px->ensure_grad().data(), k);
        if (pw->requires_grad)
          sgemm(true, false, k, n, m, 1.0f, px->value.data(), k, g, n, 1.0f,
                pw->ensure_grad().data(), n);
        if (pb && pb->requires_grad) {
          float* gb = pb->ensure_grad().data();
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c)
              gb[c] += g[static_cast<std::size_t>(r) * n + c];
        }
      },
      "linear");
}

namespace {

struct ConvDims {
  int n, h, w, ci;
  int kh, kw, co;
  int stride, pad;
  int ho, wo;
  std::size_t patch() const {
    return static_cast<std::size_t>(kh) * kw * ci;
  }
  std::size_t rows() const {
    return static_cast<std::size_t>(n) * ho * wo;
  }
};

ConvDims conv_dims(const Shape& x, const Shape& w, int stride, int pad) {
  if (x.size() != 4)
    throw ShapeError("conv2d: input must be NHWC, got " + shape_str(x));
  if (w.size() != 4)
    throw ShapeError("conv2d: kernel must be (KH,KW,Cin,Cout), got " +
                     shape_str(w));
  if (x[3] != w[2])
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x) +
                     " vs kernel " + shape_str(w));
  ConvDims d{x[0], x[1], x[2], x[3], w[0], w[1], w[3], stride, pad, 0, 0};
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad)
    throw ShapeError("conv2d: kernel " + shape_str(w) +
                     " larger than padded input " + shape_str(x));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

void im2col(const float* x, const ConvDims& d, float* col) {
  const std::size_t crow = d.patch();
  for (int n = 0; n < d.n; ++n) {
    const float* xn =
        x + static_cast<std::size_t>(n) * d.h * d.w * d.ci;
    for (int ho = 0; ho < d.ho; ++ho) {
      for (int wo = 0; wo < d.wo; ++wo) {
        float* row =
            col + ((static_cast<std::size_t>(n) * d.ho + ho) * d.wo + wo) * crow;
        for (int kh = 0; kh < d.kh; ++kh) {
          const int ih = ho * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.h) {
            std::memset(row, 0,
                        static_cast<std::size_t>(d.kw) * d.ci * sizeof(float));
            row += static_cast<std::size_t>(d.kw) * d.ci;
            continue;
          }
          for (int kw = 0; kw < d.kw; ++kw) {
            const int iw = wo * d.stride + kw - d.pad;
            if (iw < 0 || iw >= d.w) {
              std::memset(row, 0, static_cast<std::size_t>(d.ci) * sizeof(float));
            } else {
              std::memcpy(row,
                          xn + (static_cast<std::size_t>(ih) * d.w + iw) * d.ci,
                          static_cast<std::size_t>(d.ci) * sizeof(float));
            }
            row += d.ci;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvDims& d, float* gx) {
  const std::size_t crow = d.patch();
  for (int n = 0; n < d.n; ++n) {
    float* gn = gx + static_cast<std::size_t>(n) * d.h * d.w * d.ci;
    for (int ho = 0; ho < d.ho; ++ho) {
      for (int wo = 0; wo < d.wo; ++wo) {
        const float* row =
            col + ((static_cast<std::size_t>(n) * d.ho + ho) * d.wo + wo) * crow;
        for (int kh = 0; kh < d.kh; ++kh) {
          const int ih = ho * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.h) {
            row += static_cast<std::size_t>(d.kw) * d.ci;
            continue;
          }
          for (int kw = 0; kw < d.kw; ++kw) {
            const int iw = wo * d.stride + kw - d.pad;
            if (iw >= 0 && iw < d.w) {
              float* g = gn + (static_cast<std::size_t>(ih) * d.w + iw) * d.ci;
              for (int c = 0; c < d.ci; ++c) g[c] += row[c];
            }
            row += d.ci;
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
  if (b.defined() &&
      !(b.shape().size() == 1 && b.shape()[0] == d.co))
    throw ShapeError("conv2d: bias shape " + shape_str(b.shape()) +
                     " does not match Cout " + std::to_string(d.co));
  const int m = static_cast<int>(d.rows());
  const int k = static_cast<int>(d.patch());
  const bool is_1x1 = (d.kh == 1 && d.kw == 1 && stride == 1 && pad == 0);

  Tensor out({d.n, d.ho, d.wo, d.co});
  if (is_1x1) {
    sgemm(false, false, m, d.co, k, 1.0f, x.value().data(), k,
          w.value().data(), d.co, 0.0f, out.data(), d.co);
  } else {
    std::vector<float> col(d.rows() * d.patch());
    im2col(x.value().data(), d, col.data());
    sgemm(false, false, m, d.co, k, 1.0f, col.data(), k, w.value().data(),
          d.co, 0.0f, out.data(), d.co);
  }
  if (b.defined()) {
    float* o = out.data();
    const float* bias = b.value().data();
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < d.co; ++c)
        o[static_cast<std::size_t>(r) * d.co + c] += bias[c];
  }

  NodePtr px = x.node, pw = w.node, pb = b.defined() ? b.node : nullptr;
  std::vector<NodePtr> parents = {px, pw};
  if (pb) parents.push_back(pb);
  return make_node(
      std::move(out), parents,
      [px, pw, pb, d, m, k, is_1x1](Node& nd) {
        const float* g = nd.grad.data();
        if (pw->requires_grad) {
          if (is_1x1) {
            sgemm(true, false, k, d.co, m, 1.0f, px->value.data(), k, g, d.co,
                  1.0f, pw->ensure_grad().data(), d.co);
          } else {
            std::vector<float> col(d.rows() * d.patch());
            im2col(px->value.data(), d, col.data());
            sgemm(true, false, k, d.co, m, 1.0f, col.data(), k, g, d.co, 1.0f,
                  pw->ensure_grad().data(), d.co);
          }
        }
        if (px->requires_grad) {
          if (is_1x1) {
            sgemm(false, true, m, k, d.co, 1.0f, g, d.co, pw->value.data(),
                  d.co, 1.0f, px->ensure_grad().data(), k);
          } else {
            std::vector<float> gcol(d.rows() * d.patch());
            sgemm(false, true, m, k, d.co, 1.0f, g, d.co, pw->value.data(),
                  d.co, 0.0f, gcol.data(), k);
            col2im_add(gcol.data(), d, px->ensure_grad().data());
          }
        }
        if (pb && pb->requires_grad) {
          float* gb = pb->ensure_grad().data();
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < d.co; ++c)
              gb[c] += g[static_cast<std::size_t>(r) * d.co + c];
        }
      },
      "conv2d");
}

// ---- heads ----

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be (N,K), got " +
                     shape_str(s));
  const int n = s[0], kk = s[1];
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (int lab : labels)
    if (lab < 0 || lab >= kk)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(lab) +
                       " outside [0," + std::to_string(kk) + ")");
  double total = 0.0;
  const float* l = logits.value().data();
  for (int i = 0; i < n; ++i) {
    const float* row = l + static_cast<std::size_t>(i) * kk;
    float mx = row[0];
    for (int j = 1; j < kk; ++j) mx = std::max(mx, row[j]);
    double se = 0.0;
    for (int j = 0; j < kk; ++j) se += std::exp(static_cast<double>(row[j] - mx));
    total += mx + std::log(se) - row[labels[static_cast<std::size_t>(i)]];
  }
  Tensor out({1}, {static_cast<float>(total / n)});
  NodePtr pl = logits.node;
  return make_node(
      std::move(out), {pl},
      [pl, labels, n, kk](Node& nd) {
        if (!pl->requires_grad) return;
        const float g = nd.grad[0] / static_cast<float>(n);
        const float* l = pl->value.data();
        float* gd = pl->ensure_grad().data();
        for (int i = 0; i < n; ++i) {
          const float* row = l + static_cast<std::size_t>(i) * kk;
          float mx = row[0];
          for (int j = 1; j < kk; ++j) mx = std::max(mx, row[j]);
          double se = 0.0;
          for (int j = 0; j < kk; ++j)
            se += std::exp(static_cast<double>(row[j] - mx));
          float* gr = gd + static_cast<std::size_t>(i) * kk;
          for (int j = 0; j < kk; ++j) {
            float p = static_cast<float>(
                std::exp(static_cast<double>(row[j] - mx)) / se);
            gr[j] += g * (p - (j == labels[static_cast<std::size_t>(i)] ? 1.0f
                                                                        : 0.0f));
          }
        }
      },
      "softmax_cross_entropy");
}

Var sample_gaussian(const Var& mu, const Var& logvar, RngState& rng) {
  if (mu.shape() != logvar.shape())
    throw ShapeError("sample_gaussian: mu " + shape_str(mu.shape()) +
                     " vs logvar " + shape_str(logvar.shape()));
  Tensor eta(mu.shape());
  for (std::size_t i = 0; i < eta.numel(); ++i) eta[i] = rng.normal();
  Tensor out(mu.shape());
  const float* m = mu.value().data();
  const float* lv = logvar.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = m[i] + std::exp(0.5f * lv[i]) * eta[i];
  NodePtr pm = mu.node, pv = logvar.node;
  return make_node(
      std::move(out), {pm, pv},
      [pm, pv, eta](Node& nd) {
        const float* g = nd.grad.data();
        if (pm->requires_grad) add_into(pm->ensure_grad(), nd.grad);
        if (pv->requires_grad) {
          float* gv = pv->ensure_grad().data();
          const float* lv = pv->value.data();
          for (std::size_t i = 0; i < nd.grad.numel(); ++i)
            gv[i] += g[i] * 0.5f * std::exp(0.5f * lv[i]) * eta[i];
        }
      },
      "sample_gaussian");
}

// ---- backward ----

void backward(const Var& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined loss");
  if (loss.value().numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  if (!loss.node->requires_grad) return;

  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node.get(), 0);
  visited.insert(loss.node.get());
  while (!stack.empty()) {
    auto& [node, i] = stack.back();
    if (i < node->parents.size()) {
      Node* p = node->parents[i++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node->ensure_grad()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace dcvae
