#include "dcvae/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dcvae {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

static void validate_shape(const Shape& s) {
  for (int d : s) {
    if (d <= 0)
      throw ShapeError("tensor extents must be positive, got " + shape_str(s));
  }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
}

bool Tensor::all_finite() const {
  // acc picks up NaN from any non-finite element: x*0 is NaN for NaN/Inf.
  float acc = 0.0f;
  for (float v : data_) acc += v * 0.0f;
  return acc == 0.0f;
}

float Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() requires a 1-element tensor, got " +
                     shape_str(shape_));
  return data_[0];
}

namespace {
bool g_finite_checks = true;
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

void check_finite(const Tensor& t, const char* op) {
  if (!g_finite_checks) return;
  if (!t.all_finite())
    throw NumericError(std::string("non-finite values produced by op '") + op +
                       "'");
}

}  // namespace dcvae
