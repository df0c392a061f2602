#pragma once

#include "sdnet/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>

namespace sdnet {

/// H×W×C raster. Pixels are stored as a (H·W)×C row-major array so that a
/// pixel is a row, a channel is a column, and the whole image flattens to a
/// pixel-interleaved vector without copying.
///
/// Floating-point rasters hold intensities in [0,1]; 8-bit rasters hold 0..255.
template <typename Scalar>
struct Raster {
  using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int height = 0;
  int width = 0;
  Pixels pixels;

  Raster() = default;
  Raster(int h, int w, int channels, Scalar fill = Scalar(0))
      : height(h), width(w), pixels(Pixels::Constant(Eigen::Index(h) * w, channels, fill)) {
    if (h <= 0 || w <= 0 || channels <= 0) throw InvalidArgument("raster dimensions must be positive");
  }

  int channels() const { return static_cast<int>(pixels.cols()); }
  Eigen::Index size() const { return pixels.rows(); }
  bool empty() const { return pixels.size() == 0; }

  Scalar& operator()(int y, int x, int c = 0) { return pixels(Eigen::Index(y) * width + x, c); }
  Scalar operator()(int y, int x, int c = 0) const { return pixels(Eigen::Index(y) * width + x, c); }

  bool same_shape(const Raster& o) const {
    return height == o.height && width == o.width && channels() == o.channels();
  }

  /// Flattened pixel-interleaved view (y, x, c order).
  Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> flat() const {
    return {pixels.data(), pixels.size()};
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.same_shape(b) && (a.pixels == b.pixels).all();
  }
};

using Image = Raster<double>;
using Image8 = Raster<std::uint8_t>;

/// Full-scale transmitted intensity of a raster type, in the raster's own units.
template <typename Scalar>
constexpr double full_scale() {
  if constexpr (std::is_floating_point_v<Scalar>) return 1.0;
  else return 255.0;
}

inline Image to_float(const Image8& img) {
  Image out;
  out.height = img.height;
  out.width = img.width;
  out.pixels = img.pixels.template cast<double>() / 255.0;
  return out;
}

inline Image8 quantize(const Image& img) {
  Image8 out;
  out.height = img.height;
  out.width = img.width;
  out.pixels = (img.pixels.cwiseMax(0.0).cwiseMin(1.0) * 255.0).round().template cast<std::uint8_t>();
  return out;
}

/// Rebuilds an image from a flattened pixel-interleaved row.
template <typename Derived>
Image unflatten(const Eigen::DenseBase<Derived>& row, int height, int width, int channels) {
  if (row.size() != Eigen::Index(height) * width * channels)
    throw InvalidArgument("flattened row does not match image shape");
  Image out;
  out.height = height;
  out.width = width;
  out.pixels = Eigen::Map<const Image::Pixels>(row.derived().eval().data(), Eigen::Index(height) * width, channels);
  return out;
}

/// ITU-R 601 luminance; single-channel input is returned as-is.
template <typename Scalar>
Eigen::ArrayXd luminance(const Raster<Scalar>& img) {
  Eigen::ArrayXXd px = img.pixels.template cast<double>();
  if (img.channels() == 1) return px.col(0);
  if (img.channels() < 3) throw InvalidArgument("luminance needs 1 or 3+ channels");
  return 0.299 * px.col(0) + 0.587 * px.col(1) + 0.114 * px.col(2);
}

/// Peak signal-to-noise ratio in dB against the scalar's full scale; +inf for identical rasters.
template <typename Scalar>
double psnr(const Raster<Scalar>& a, const Raster<Scalar>& b) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr needs rasters of equal shape");
  const double mse = (a.pixels.template cast<double>() - b.pixels.template cast<double>()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = full_scale<Scalar>();
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace sdnet
