#include "sdnet/stain.hpp"

#include "sdnet/loss.hpp"
#include "sdnet/metrics.hpp"
#include "sdnet/rng.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace sdnet {

namespace {

double percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  return sorted_quantile(v, pct / 100.0);
}

Eigen::Vector3d nonnegative_unit(Eigen::Vector3d v) {
  if (v.sum() < 0.0) v = -v;
  v = v.cwiseMax(0.0);
  const double n = v.norm();
  if (!(n > 0.0)) throw DegenerateError("stain vector collapsed to zero");
  return v / n;
}

}  // namespace

StainMatrix estimate_stain_matrix(const OpticalDensity& od, const MacenkoParams& params) {
  if (!(params.alpha >= 0.0 && params.alpha < 50.0)) throw InvalidArgument("alpha must lie in [0,50)");
  std::vector<Eigen::Index> tissue;
  for (Eigen::Index p = 0; p < od.cols(); ++p)
    if (od.col(p).maxCoeff() >= params.beta) tissue.push_back(p);
  if (tissue.size() < 2) throw NoTissueError("fewer than 2 pixels exceed the tissue optical-density threshold");

  OpticalDensity t(3, Eigen::Index(tissue.size()));
  for (std::size_t k = 0; k < tissue.size(); ++k) t.col(Eigen::Index(k)) = od.col(tissue[k]);
  const Eigen::Vector3d mean = t.rowwise().mean();
  const OpticalDensity centered = t.colwise() - mean;
  const Eigen::Matrix3d cov = centered * centered.transpose() / double(std::max<Eigen::Index>(t.cols() - 1, 1));

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d values = eig.eigenvalues();  // ascending
  if (!(values(2) > 0.0) || values(1) <= params.rank_tolerance * values(2))
    throw DegenerateError("tissue optical densities span fewer than two stain directions");

  Eigen::Matrix<double, 3, 2> plane;
  plane.col(0) = eig.eigenvectors().col(2);
  plane.col(1) = eig.eigenvectors().col(1);
  for (int c = 0; c < 2; ++c)
    if (plane(0, c) < 0.0) plane.col(c) = -plane.col(c);

  const Eigen::Matrix<double, 2, Eigen::Dynamic> proj = plane.transpose() * t;
  std::vector<double> phi(std::size_t(proj.cols()));
  for (Eigen::Index p = 0; p < proj.cols(); ++p) phi[std::size_t(p)] = std::atan2(proj(1, p), proj(0, p));
  const double lo = percentile(phi, params.alpha), hi = percentile(phi, 100.0 - params.alpha);

  const Eigen::Vector3d v_lo = nonnegative_unit(plane * Eigen::Vector2d(std::cos(lo), std::sin(lo)));
  const Eigen::Vector3d v_hi = nonnegative_unit(plane * Eigen::Vector2d(std::cos(hi), std::sin(hi)));

  // Haematoxylin absorbs more red; ties go to the larger blue component.
  bool lo_is_h = v_lo(0) > v_hi(0) || (v_lo(0) == v_hi(0) && v_lo(2) >= v_hi(2));
  StainMatrix s;
  s.col(0) = lo_is_h ? v_lo : v_hi;
  s.col(1) = lo_is_h ? v_hi : v_lo;
  if (std::abs(s.col(0).dot(s.col(1))) > 1.0 - 1e-9) throw DegenerateError("estimated stain vectors are parallel");
  return s;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> separate_od(const OpticalDensity& od, const StainMatrix& stains) {
  const Eigen::Matrix2d gram = stains.transpose() * stains;
  if (std::abs(gram.determinant()) < 1e-12) throw DegenerateError("stain matrix is singular");
  Eigen::Matrix<double, 2, Eigen::Dynamic> conc = gram.ldlt().solve(stains.transpose() * od);
  return conc.cwiseMax(0.0);
}

Eigen::Vector2d max_concentrations(const Eigen::Matrix<double, 2, Eigen::Dynamic>& conc) {
  if (conc.cols() == 0) throw InvalidArgument("empty concentration map");
  Eigen::Vector2d out;
  for (int r = 0; r < 2; ++r) {
    std::vector<double> row(std::size_t(conc.cols()));
    for (Eigen::Index p = 0; p < conc.cols(); ++p) row[std::size_t(p)] = conc(r, p);
    out(r) = percentile(std::move(row), 99.0);
  }
  return out;
}

double angle_degrees(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

void save_reference(const StainReference& ref, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  Eigen::Matrix3d full;
  full.leftCols<2>() = ref.stains;
  full.col(2) = ref.stains.col(0).cross(ref.stains.col(1)).normalized();
  os << std::setprecision(17) << "stain_matrix";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) os << ' ' << full(r, c);
  os << "\nmax_concentration " << ref.max_concentration(0) << ' ' << ref.max_concentration(1) << '\n';
}

StainReference load_reference(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string key;
  Eigen::Matrix3d full;
  StainReference ref;
  if (!(is >> key) || key != "stain_matrix") throw IoError(path + ": expected stain_matrix");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(is >> full(r, c))) throw IoError(path + ": truncated stain_matrix");
  if (!(is >> key) || key != "max_concentration" || !(is >> ref.max_concentration(0) >> ref.max_concentration(1)))
    throw IoError(path + ": expected max_concentration with two values");
  ref.stains = full.leftCols<2>();
  for (int c = 0; c < 2; ++c)
    if (std::abs(ref.stains.col(c).norm() - 1.0) > 1e-6 || (ref.stains.col(c).array() < 0.0).any())
      throw IoError(path + ": stain vectors must be nonnegative unit vectors");
  if ((ref.max_concentration.array() <= 0.0).any()) throw IoError(path + ": max concentrations must be positive");
  return ref;
}

StainMatrix default_he_stains() {
  StainMatrix s;
  s.col(0) = Eigen::Vector3d(0.650, 0.704, 0.286).normalized();
  s.col(1) = Eigen::Vector3d(0.072, 0.990, 0.105).normalized();
  return s;
}

ThroughputResult throughput_bench(const std::vector<Image8>& images, const StainReference& ref, int warm_iterations,
                                  double min_seconds, int sd_batch) {
  if (images.empty()) throw InvalidArgument("benchmark needs at least one image");
  if (warm_iterations < 100) throw InvalidArgument("benchmark needs at least 100 warm-up iterations");
  using clock = std::chrono::steady_clock;
  ThroughputResult out;
  out.sd_batch = sd_batch;
  out.macenko_image_side = images.front().width;

  Rng rng(derive_seed(7, 0xBE7C));
  Eigen::MatrixXd logits(sd_batch, 1);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 4.0 * uniform01(rng) - 2.0;

  volatile double sink = 0.0;
  for (int i = 0; i < warm_iterations; ++i) sink = sink + sd_penalty_eq1(logits, 0.01);
  long calls = 0;
  const auto t0 = clock::now();
  double elapsed = 0.0;
  do {
    for (int i = 0; i < 1000; ++i) {
      logits(0, 0) += 1e-12;
      sink = sink + sd_penalty_eq1(logits, 0.01);
    }
    calls += 1000;
    elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  } while (elapsed < min_seconds);
  out.sd_penalty_images_per_s = double(calls) * double(sd_batch) / elapsed;

  for (int i = 0; i < warm_iterations; ++i) {
    const auto img = normalize_to_reference(images[std::size_t(i) % images.size()], ref);
    sink = sink + img.pixels(0, 0);
  }
  long done = 0;
  const auto t1 = clock::now();
  do {
    const auto img = normalize_to_reference(images[std::size_t(done) % images.size()], ref);
    sink = sink + img.pixels(0, 0);
    ++done;
    elapsed = std::chrono::duration<double>(clock::now() - t1).count();
  } while (elapsed < min_seconds);
  out.macenko_images_per_s = double(done) / elapsed;
  return out;
}

Image8 synthetic_he_image(int height, int width, const StainMatrix& stains, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4E));
  auto field = [&](double scale) {
    // Sum of three random low-frequency plane waves in [0,1].
    double fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = (uniform01(rng) - 0.5) * scale;
      fy[k] = (uniform01(rng) - 0.5) * scale;
      ph[k] = uniform01(rng) * 2.0 * std::numbers::pi;
    }
    Eigen::ArrayXXd f(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += std::sin(fx[k] * x + fy[k] * y + ph[k]);
        f(y, x) = 0.5 + s / 6.0;
      }
    return f;
  };
  Eigen::ArrayXXd h = 0.3 * (field(0.6) - 0.5).cwiseMax(0.0);
  Eigen::ArrayXXd nucleus = Eigen::ArrayXXd::Zero(height, width);
  Eigen::ArrayXXd e = 0.15 + 0.55 * field(0.3);
  const Eigen::ArrayXXd lumen = field(0.2);

  const int nuclei = std::max(3, height * width / 400);
  for (int k = 0; k < nuclei; ++k) {
    const double cy = uniform01(rng) * height, cx = uniform01(rng) * width;
    const double r = 2.0 + 3.0 * uniform01(rng) * std::max(1.0, height / 64.0);
    const double peak = 0.6 + 0.6 * uniform01(rng);
    const int y0 = std::max(0, int(cy - 2 * r)), y1 = std::min(height, int(cy + 2 * r) + 1);
    const int x0 = std::max(0, int(cx - 2 * r)), x1 = std::min(width, int(cx + 2 * r) + 1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
        const double w = std::exp(-d2 * d2);
        h(y, x) += peak * w;
        nucleus(y, x) = std::max(nucleus(y, x), w);
      }
  }
  e *= 1.0 - 0.9 * nucleus;
  Eigen::Matrix<double, 2, Eigen::Dynamic> conc(2, Eigen::Index(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const bool empty = lumen(y, x) > 0.82;
      conc(0, Eigen::Index(y) * width + x) = empty ? 0.0 : h(y, x);
      conc(1, Eigen::Index(y) * width + x) = empty ? 0.0 : e(y, x);
    }
  return od_to_rgb<std::uint8_t>(recombine_od(stains, conc), height, width);
}

}  // namespace sdnet
