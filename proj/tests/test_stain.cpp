#include "sdnet/rng.hpp"
#include "sdnet/stain.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace sdnet;

namespace {

StainMatrix tilted_stains() {
  StainMatrix s;
  s.col(0) = Eigen::Vector3d(0.55, 0.76, 0.34).normalized();
  s.col(1) = Eigen::Vector3d(0.15, 0.95, 0.27).normalized();
  return s;
}

/// Concentrations where a share of pixels carries only one stain.
Eigen::Matrix<double, 2, Eigen::Dynamic> mixed_concentrations(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Matrix<double, 2, Eigen::Dynamic> c(2, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    c(0, p) = 0.1 + 1.2 * uniform01(rng);
    c(1, p) = 0.1 + 0.8 * uniform01(rng);
    const double u = uniform01(rng);
    if (u < 0.15) c(1, p) = 0.0;
    else if (u < 0.3) c(0, p) = 0.0;
  }
  return c;
}

}  // namespace

TEST_CASE("optical density conversion") {
  Image8 white(1, 1, 3, 255);
  CHECK(rgb_to_od(white).isZero(0));
  Image8 dim(1, 1, 3, 94);
  CHECK(rgb_to_od(dim)(0, 0) == doctest::Approx(1.0).epsilon(0.01));
  for (int v = 1; v <= 255; ++v) {
    Image8 px(1, 1, 3, std::uint8_t(v));
    const auto back = od_to_rgb<std::uint8_t>(rgb_to_od(px), 1, 1);
    CHECK(std::abs(int(back.pixels(0, 0)) - v) <= 1);
  }
  Image8 black(1, 1, 3, 0);
  CHECK(std::isfinite(rgb_to_od(black)(0, 0)));
}

TEST_CASE("stain estimation recovers known vectors") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const StainMatrix truth = seed == 1 ? default_he_stains() : tilted_stains();
    const OpticalDensity od = truth * mixed_concentrations(4096, seed);
    const StainMatrix est = estimate_stain_matrix(od);
    CHECK(angle_degrees(est.col(0), truth.col(0)) < 2.0);
    CHECK(angle_degrees(est.col(1), truth.col(1)) < 2.0);
    for (int c = 0; c < 2; ++c) {
      CHECK(est.col(c).norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((est.col(c).array() >= 0.0).all());
    }
  }
}

TEST_CASE("stain estimation on a rendered H&E image") {
  const StainMatrix truth = default_he_stains();
  const auto img = synthetic_he_image(128, 128, truth, 5);
  const StainMatrix est = estimate_stain_matrix(rgb_to_od(img));
  CHECK(angle_degrees(est.col(0), truth.col(0)) < 2.0);
  CHECK(angle_degrees(est.col(1), truth.col(1)) < 2.0);
}

TEST_CASE("stain estimation failure modes") {
  Image8 white(8, 8, 3, 255);
  CHECK_THROWS_AS(estimate_stain_matrix(rgb_to_od(white)), NoTissueError);
  const StainMatrix s = default_he_stains();
  Eigen::Matrix<double, 2, Eigen::Dynamic> c = mixed_concentrations(500, 4);
  c.row(1).setZero();
  CHECK_THROWS_AS(estimate_stain_matrix(s * c), DegenerateError);
}

TEST_CASE("separation inverts recombination") {
  const StainMatrix s = tilted_stains();
  const auto c = mixed_concentrations(1000, 6);
  const auto back = separate_od(recombine_od(s, c), s);
  for (Eigen::Index p = 0; p < c.cols(); ++p)
    for (int r = 0; r < 2; ++r) CHECK(std::abs(back(r, p) - c(r, p)) <= 1e-6 * std::max(1.0, std::abs(c(r, p))));

  Image8 white(2, 2, 3, 255);
  CHECK(separate(white, s).values.isZero(0));

  OpticalDensity adversarial(3, 1);
  adversarial << 0.0, 1.0, 0.0;
  CHECK((separate_od(adversarial, default_he_stains()).array() >= 0.0).all());
  CHECK(separate_od(adversarial, default_he_stains())(0, 0) == 0.0);
}

TEST_CASE("intensity modification") {
  const StainMatrix s = default_he_stains();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto img = synthetic_he_image(64, 64, s, seed);
    CHECK(psnr(modify_intensity(img, 1.0, 1.0), img) >= 30.0);
    const auto cleared = modify_intensity(img, 0.0, 0.0);
    CHECK((cleared.pixels == 255).all());
  }
  const auto img = synthetic_he_image(64, 64, s, 9);
  const auto fimg = to_float(img);
  const auto h_only = modify_intensity(fimg, s, 1.0, 0.0);
  const OpticalDensity od = rgb_to_od(h_only);
  for (Eigen::Index p = 0; p < od.cols(); ++p)
    if (od.col(p).maxCoeff() >= 0.15) CHECK(angle_degrees(od.col(p), s.col(0)) < 2.0);
  CHECK_THROWS_AS(modify_intensity(img, s, 1.5, 1.0), InvalidArgument);
}

TEST_CASE("intensity modification is monotone in each multiplier") {
  const StainMatrix s = default_he_stains();
  const auto img = synthetic_he_image(48, 48, s, 11);
  for (double hi : {1.0, 0.7, 0.3}) {
    const auto a = modify_intensity(img, s, hi, 1.0);
    const auto b = modify_intensity(img, s, hi - 0.2, 1.0);
    CHECK((b.pixels >= a.pixels).all());
    const auto c = modify_intensity(img, s, 1.0, hi);
    const auto d = modify_intensity(img, s, 1.0, hi - 0.2);
    CHECK((d.pixels >= c.pixels).all());
  }
}

TEST_CASE("normalization") {
  const StainMatrix s = default_he_stains();
  const auto img = synthetic_he_image(96, 96, s, 3);
  const auto own = make_reference(std::vector<Image8>{img});
  CHECK(psnr(normalize_to_reference(img, own), img) >= 30.0);

  // Same concentrations under two stain matrices.
  const auto conc = separate(to_float(img), s);
  const auto shifted = recombine<std::uint8_t>(tilted_stains(), conc);
  const auto a = normalize_to_reference(img, own);
  const auto b = normalize_to_reference(shifted, own);
  CHECK((a.pixels.cast<double>() - b.pixels.cast<double>()).abs().mean() < 3.0);

  auto doubled = own;
  doubled.max_concentration *= 2.0;
  const auto fa = normalize_to_reference(to_float(img), own);
  const auto fb = normalize_to_reference(to_float(img), doubled);
  const Eigen::Vector2d ma = max_concentrations(separate(fa, own.stains).values);
  const Eigen::Vector2d mb = max_concentrations(separate(fb, own.stains).values);
  CHECK(mb(0) == doctest::Approx(2.0 * ma(0)).epsilon(1e-6));
  CHECK(mb(1) == doctest::Approx(2.0 * ma(1)).epsilon(1e-6));
}

TEST_CASE("reference file round trip") {
  const auto img = synthetic_he_image(64, 64, default_he_stains(), 2);
  const auto ref = make_reference(std::vector<Image8>{img});
  const auto path = (std::filesystem::temp_directory_path() / "sdnet_ref_test.txt").string();
  save_reference(ref, path);
  const auto back = load_reference(path);
  CHECK((back.stains - ref.stains).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(back.max_concentration == ref.max_concentration);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_reference(path), IoError);
}

TEST_CASE("throughput benchmark direction") {
  const auto s = default_he_stains();
  std::vector<Image8> images{synthetic_he_image(224, 224, s, 1), synthetic_he_image(224, 224, s, 2)};
  const auto ref = make_reference(images);
  const auto r = throughput_bench(images, ref, 100, 0.2);
  CHECK(r.sd_penalty_images_per_s > 100.0 * r.macenko_images_per_s);
}
