#pragma once

#include "sdnet/errors.hpp"
#include "sdnet/raster.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

namespace sdnet {

/// Unit optical-density stain vectors: column 0 haematoxylin, column 1 eosin.
using StainMatrix = Eigen::Matrix<double, 3, 2>;
/// 3×P optical densities, one column per pixel.
using OpticalDensity = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Per-pixel H (row 0) and E (row 1) concentrations.
struct ConcentrationMap {
  Eigen::Matrix<double, 2, Eigen::Dynamic> values;
  int height = 0;
  int width = 0;
};

struct StainReference {
  StainMatrix stains;
  Eigen::Vector2d max_concentration;  // 99th percentile per stain
};

/// Macenko constants.
struct MacenkoParams {
  double beta = 0.15;   // tissue OD threshold
  double alpha = 1.0;   // angle percentile (alpha and 100 - alpha)
  double rank_tolerance = 1e-3;  // min ratio of 2nd to 1st covariance eigenvalue
};

inline constexpr double kBackgroundIntensity = 255.0;

/// od = -ln(max(I,1)/255) per channel of an RGB raster.
template <typename Scalar>
OpticalDensity rgb_to_od(const Raster<Scalar>& img) {
  if (img.channels() != 3) throw InvalidArgument("optical density needs an RGB image");
  const double to_intensity = kBackgroundIntensity / full_scale<Scalar>();
  Eigen::ArrayXXd intensity = img.pixels.template cast<double>().transpose() * to_intensity;
  return -(intensity.cwiseMax(1.0) / kBackgroundIntensity).log().matrix();
}

/// Inverse of rgb_to_od; 8-bit output is rounded, float output is left unquantized.
template <typename Scalar>
Raster<Scalar> od_to_rgb(const OpticalDensity& od, int height, int width) {
  if (od.cols() != Eigen::Index(height) * width) throw InvalidArgument("optical density does not match dims");
  Eigen::ArrayXXd intensity = (kBackgroundIntensity * (-od.array()).exp()).transpose();
  Raster<Scalar> out;
  out.height = height;
  out.width = width;
  if constexpr (std::is_floating_point_v<Scalar>) {
    out.pixels = (intensity / kBackgroundIntensity).cwiseMin(1.0).cwiseMax(0.0).template cast<Scalar>();
  } else {
    out.pixels = intensity.round().cwiseMin(255.0).cwiseMax(0.0).template cast<Scalar>();
  }
  return out;
}

/// Macenko estimate from the top-2 eigenplane of the tissue OD covariance.
/// Throws NoTissueError without enough tissue pixels, DegenerateError when the
/// covariance is (numerically) rank one.
StainMatrix estimate_stain_matrix(const OpticalDensity& od, const MacenkoParams& params = {});

/// Least-squares concentrations with negatives clipped to zero.
Eigen::Matrix<double, 2, Eigen::Dynamic> separate_od(const OpticalDensity& od, const StainMatrix& stains);

template <typename Scalar>
ConcentrationMap separate(const Raster<Scalar>& img, const StainMatrix& stains) {
  return {separate_od(rgb_to_od(img), stains), img.height, img.width};
}

inline OpticalDensity recombine_od(const StainMatrix& stains, const Eigen::Matrix<double, 2, Eigen::Dynamic>& conc) {
  return stains * conc;
}

template <typename Scalar>
Raster<Scalar> recombine(const StainMatrix& stains, const ConcentrationMap& conc) {
  return od_to_rgb<Scalar>(recombine_od(stains, conc.values), conc.height, conc.width);
}

/// Scales haematoxylin by m_h and eosin by m_e using the given stain matrix.
template <typename Scalar>
Raster<Scalar> modify_intensity(const Raster<Scalar>& img, const StainMatrix& stains, double m_h, double m_e) {
  if (!(m_h >= 0.0 && m_h <= 1.0 && m_e >= 0.0 && m_e <= 1.0))
    throw InvalidArgument("stain multipliers must lie in [0,1]");
  ConcentrationMap c = separate(img, stains);
  c.values.row(0) *= m_h;
  c.values.row(1) *= m_e;
  return recombine<Scalar>(stains, c);
}

/// Estimates the image's own stain matrix, then scales each stain.
template <typename Scalar>
Raster<Scalar> modify_intensity(const Raster<Scalar>& img, double m_h, double m_e, const MacenkoParams& params = {}) {
  return modify_intensity(img, estimate_stain_matrix(rgb_to_od(img), params), m_h, m_e);
}

/// Per-stain 99th percentile of a concentration map.
Eigen::Vector2d max_concentrations(const Eigen::Matrix<double, 2, Eigen::Dynamic>& conc);

/// Rescales the image's concentrations so their 99th percentiles match the
/// reference maxima and recombines them with the reference stain vectors.
template <typename Scalar>
Raster<Scalar> normalize_to_reference(const Raster<Scalar>& img, const StainReference& ref,
                                      const MacenkoParams& params = {}) {
  const OpticalDensity od = rgb_to_od(img);
  const StainMatrix stains = estimate_stain_matrix(od, params);
  Eigen::Matrix<double, 2, Eigen::Dynamic> conc = separate_od(od, stains);
  const Eigen::Vector2d maxc = max_concentrations(conc);
  if ((maxc.array() <= 0.0).any()) throw DegenerateError("a stain has zero 99th-percentile concentration");
  conc.row(0) *= ref.max_concentration(0) / maxc(0);
  conc.row(1) *= ref.max_concentration(1) / maxc(1);
  return od_to_rgb<Scalar>(recombine_od(ref.stains, conc), img.height, img.width);
}

/// Pools the optical densities of a reference image set.
template <typename Scalar>
StainReference make_reference(const std::vector<Raster<Scalar>>& images, const MacenkoParams& params = {}) {
  if (images.empty()) throw InvalidArgument("reference set is empty");
  Eigen::Index total = 0;
  for (const auto& img : images) total += img.size();
  OpticalDensity od(3, total);
  Eigen::Index at = 0;
  for (const auto& img : images) {
    od.middleCols(at, img.size()) = rgb_to_od(img);
    at += img.size();
  }
  StainReference ref;
  ref.stains = estimate_stain_matrix(od, params);
  ref.max_concentration = max_concentrations(separate_od(od, ref.stains));
  if ((ref.max_concentration.array() <= 0.0).any()) throw DegenerateError("reference has an empty stain");
  return ref;
}

/// Angle in degrees between two nonzero vectors.
double angle_degrees(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Text format: "stain_matrix" + 9 values (rows of [H E residual]),
/// "max_concentration" + 2 values.
void save_reference(const StainReference& ref, const std::string& path);
StainReference load_reference(const std::string& path);

/// Common H&E reference vectors, used by the synthetic tissue generator.
StainMatrix default_he_stains();

struct ThroughputResult {
  double sd_penalty_images_per_s = 0.0;
  double macenko_images_per_s = 0.0;
  int sd_batch = 512;
  int macenko_image_side = 224;
};

/// Images per second for the logit penalty on a 512×1 logit batch versus
/// Macenko normalization of `image_side`² RGB images.
ThroughputResult throughput_bench(const std::vector<Image8>& images, const StainReference& ref, int warm_iterations = 100,
                                  double min_seconds = 0.5, int sd_batch = 512);

/// Synthetic H&E image for benchmarks and fidelity tests.
Image8 synthetic_he_image(int height, int width, const StainMatrix& stains, std::uint64_t seed);

}  // namespace sdnet
