#include "hetnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hetnet {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << b << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a, b)) {
    throw InputError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

double sum(const Tensor& t) {
  double s = 0.0;
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) s += p[i];
  return s;
}

double mean(const Tensor& t) { return t.numel() == 0 ? 0.0 : sum(t) / static_cast<double>(t.numel()); }

double min_value(const Tensor& t) {
  double m = t.numel() ? t.data()[0] : 0.0;
  for (std::int64_t i = 1; i < t.numel(); ++i) m = std::min(m, t.data()[i]);
  return m;
}

double max_value(const Tensor& t) {
  double m = t.numel() ? t.data()[0] : 0.0;
  for (std::int64_t i = 1; i < t.numel(); ++i) m = std::max(m, t.data()[i]);
  return m;
}

bool all_finite(const Tensor& t) {
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor bilinear_resize(const Tensor& in, std::int64_t out_h, std::int64_t out_w) {
  const Shape4 s = in.shape();
  if (out_h <= 0 || out_w <= 0) throw InputError("bilinear_resize: non-positive output size");
  if (s.h == out_h && s.w == out_w) return in;
  Tensor out(s.b, s.c, out_h, out_w);
  const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
  for (std::int64_t b = 0; b < s.b; ++b) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = in.plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double wy = fy - static_cast<double>(y0);
        std::int64_t y1 = y0 + 1;
        y0 = std::clamp<std::int64_t>(y0, 0, s.h - 1);
        y1 = std::clamp<std::int64_t>(y1, 0, s.h - 1);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
          std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
          const double wx = fx - static_cast<double>(x0);
          std::int64_t x1 = x0 + 1;
          x0 = std::clamp<std::int64_t>(x0, 0, s.w - 1);
          x1 = std::clamp<std::int64_t>(x1, 0, s.w - 1);
          dst[oy * out_w + ox] = (1.0 - wy) * ((1.0 - wx) * src[y0 * s.w + x0] + wx * src[y0 * s.w + x1]) +
                                 wy * ((1.0 - wx) * src[y1 * s.w + x0] + wx * src[y1 * s.w + x1]);
        }
      }
    }
  }
  return out;
}

Tensor nearest_resize(const Tensor& in, std::int64_t out_h, std::int64_t out_w) {
  const Shape4 s = in.shape();
  if (out_h <= 0 || out_w <= 0) throw InputError("nearest_resize: non-positive output size");
  if (s.h == out_h && s.w == out_w) return in;
  Tensor out(s.b, s.c, out_h, out_w);
  for (std::int64_t b = 0; b < s.b; ++b) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = in.plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const std::int64_t iy = std::min<std::int64_t>(oy * s.h / out_h, s.h - 1);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const std::int64_t ix = std::min<std::int64_t>(ox * s.w / out_w, s.w - 1);
          dst[oy * out_w + ox] = src[iy * s.w + ix];
        }
      }
    }
  }
  return out;
}

Tensor threshold(const Tensor& in, double thr) {
  Tensor out(in.shape());
  for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] >= thr ? 1.0 : 0.0;
  return out;
}

Tensor hflip(const Tensor& in) {
  const Shape4 s = in.shape();
  Tensor out(s);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = in.plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) dst[y * s.w + x] = src[y * s.w + (s.w - 1 - x)];
    }
  return out;
}

Tensor crop(const Tensor& in, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
  const Shape4 s = in.shape();
  if (y0 < 0 || x0 < 0 || y0 + h > s.h || x0 + w > s.w)
    throw InputError("crop: window out of bounds");
  Tensor out(s.b, s.c, h, w);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = in.plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) dst[y * w + x] = src[(y0 + y) * s.w + (x0 + x)];
    }
  return out;
}

}  // namespace hetnet
