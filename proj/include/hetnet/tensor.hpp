#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetnet {

/// Raised when a module or run configuration is inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when runtime inputs (shapes, files, values) violate a precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape4 {
  std::int64_t b = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return b * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense rank-4 array (batch, channels, height, width), double precision.
/// The universal currency between the backbone, heads, losses and metrics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 s) : shape_(s), data_(static_cast<std::size_t>(s.numel()), 0.0) {}
  Tensor(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w)
      : Tensor(Shape4{b, c, h, w}) {}

  static Tensor full(Shape4 s, double v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((b * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  double at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((b * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }

  /// Pointer to the (b, c) spatial plane, h*w contiguous doubles.
  double* plane(std::int64_t b, std::int64_t c) {
    return data_.data() + static_cast<std::size_t>((b * shape_.c + c) * shape_.h * shape_.w);
  }
  const double* plane(std::int64_t b, std::int64_t c) const {
    return data_.data() + static_cast<std::size_t>((b * shape_.c + c) * shape_.h * shape_.w);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

double sum(const Tensor& t);
double mean(const Tensor& t);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
bool all_finite(const Tensor& t);
/// max |a - b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Bilinear resample to (out_h, out_w) with half-pixel centers.
Tensor bilinear_resize(const Tensor& in, std::int64_t out_h, std::int64_t out_w);
/// Nearest-neighbor resample; preserves binary values.
Tensor nearest_resize(const Tensor& in, std::int64_t out_h, std::int64_t out_w);
/// Elementwise v >= thr ? 1 : 0.
Tensor threshold(const Tensor& in, double thr);
/// Mirror along the width axis.
Tensor hflip(const Tensor& in);
/// Crop [y0, y0+h) x [x0, x0+w) from every plane.
Tensor crop(const Tensor& in, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w);

}  // namespace hetnet
