#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcvae {

// Error taxonomy. The CLI maps ConfigError to exit code 2 and NumericError
// to exit code 3; everything else is a plain failure.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense single-precision n-d array, row-major. The universal value carrier
// for images, latent codes and parameters.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, float fill);
  Tensor(Shape shape, std::vector<float> data);
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // NHWC convenience accessor (rank-4 tensors only).
  float& at(int n, int h, int w, int c) {
    return data_[idx4(n, h, w, c)];
  }
  float at(int n, int h, int w, int c) const {
    return data_[idx4(n, h, w, c)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  float item() const;  // value of a 1-element tensor

 private:
  std::size_t idx4(int n, int h, int w, int c) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) *
               shape_[3] +
           c;
  }
  Shape shape_;
  std::vector<float> data_;
};

// Throws NumericError if any element of t is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

// Global toggle for post-op finiteness checks (on by default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace dcvae
