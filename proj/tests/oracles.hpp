#pragma once

// Independent reference computations used only by tests.

#include "sdnet/loss.hpp"
#include "sdnet/model.hpp"

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using Big = boost::multiprecision::cpp_dec_float_50;

/// Triple-loop matrix product, no Eigen expressions involved.
inline std::vector<std::vector<double>> matmul_bt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  std::vector<std::vector<double>> out(std::size_t(a.rows()), std::vector<double>(std::size_t(b.rows()), 0.0));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out[std::size_t(i)][std::size_t(j)] = s;
    }
  return out;
}

inline Eigen::MatrixXd naive_forward(const sdnet::Model<double>& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd act = x;
  if (m.kind == sdnet::ModelKind::OneHidden) {
    const auto h = matmul_bt(x, m.w1);
    act.resize(x.rows(), m.w1.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < m.w1.rows(); ++j) act(i, j) = std::max(0.0, h[std::size_t(i)][std::size_t(j)] + m.b1(j));
  }
  const auto z = matmul_bt(act, m.w2);
  Eigen::MatrixXd out(x.rows(), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int c = 0; c < 2; ++c) out(i, c) = z[std::size_t(i)][std::size_t(c)] + m.b2(c);
  return out;
}

/// Positive-class softmax probability in 50-digit arithmetic.
inline double softmax_pos(double z0, double z1) {
  const Big e0 = boost::multiprecision::exp(Big(z0)), e1 = boost::multiprecision::exp(Big(z1));
  return static_cast<double>(e1 / (e0 + e1));
}

/// Mean cross-entropy in 50-digit arithmetic.
inline double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
  Big total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Big e0 = boost::multiprecision::exp(Big(logits(i, 0))), e1 = boost::multiprecision::exp(Big(logits(i, 1)));
    total -= boost::multiprecision::log((labels(i) == 1 ? e1 : e0) / (e0 + e1));
  }
  return static_cast<double>(total / Big(logits.rows()));
}

/// Central finite differences of CE + SD penalty over every parameter.
inline Eigen::VectorXd finite_difference_grad(const sdnet::Model<double>& model, const Eigen::MatrixXd& x,
                                              const Eigen::VectorXi& y, const sdnet::SDConfig& sd, double step = 1e-6) {
  auto objective = [&](const sdnet::Model<double>& m) {
    const Eigen::MatrixXd z = naive_forward(m, x);
    return sdnet::cross_entropy(z, y) + sdnet::sd_penalty(z, y, sd);
  };
  const Eigen::VectorXd theta = model.flatten();
  Eigen::VectorXd grad(theta.size());
  sdnet::Model<double> probe = model;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd t = theta;
    t(k) = theta(k) + step;
    probe.assign_flat(t);
    const double up = objective(probe);
    t(k) = theta(k) - step;
    probe.assign_flat(t);
    const double down = objective(probe);
    grad(k) = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Relative error, treating magnitudes below `floor` as absolute error.
inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// O(n²) pairwise AUROC with ties counted as one half.
inline double pairwise_auroc(const Eigen::VectorXd& s, const Eigen::VectorXi& y) {
  double wins = 0.0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (y(i) == 1 && y(j) == 0) {
        ++pairs;
        wins += s(i) > s(j) ? 1.0 : (s(i) == s(j) ? 0.5 : 0.0);
      }
  return wins / double(pairs);
}

}  // namespace oracle

namespace oracle {

struct GradientCase {
  sdnet::Model<double> model;
  Eigen::MatrixXd batch;
  Eigen::VectorXi labels;
  sdnet::SDConfig sd;
};

/// Random small model, batch and penalty config; alternates eq1 and eq2.
inline GradientCase random_gradient_case(std::uint64_t seed) {
  sdnet::Rng rng(sdnet::derive_seed(seed, 99));
  auto u = [&] { return sdnet::uniform01(rng); };
  GradientCase c;
  const int d = 2 + int(rng() % 5), h = int(rng() % 2) ? 3 + int(rng() % 5) : 0, n = 2 + int(rng() % 6);
  c.model = sdnet::init_model(h ? sdnet::ModelKind::OneHidden : sdnet::ModelKind::Linear, d, h, seed);
  c.model.w2 *= 2.0;
  c.batch = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return 2.0 * u() - 1.0; });
  c.labels = Eigen::VectorXi::NullaryExpr(n, [&] { return int(rng() & 1); });
  if (seed % 2 == 0) {
    c.sd = sdnet::SDConfig::eq1(u());
  } else {
    const double gammas[] = {-1, 0, 1, 2, 1.83, 2.61};
    c.sd = sdnet::SDConfig::eq2(u(), gammas[rng() % 6], u(), gammas[rng() % 6]);
  }
  return c;
}

}  // namespace oracle

#include "sdnet/metrics.hpp"
#include "sdnet/rng.hpp"

namespace oracle {

/// Fraction of null experiments (same signal, independent noise on each
/// scorer) where the one-tailed DeLong p falls below `alpha`.
inline double delong_null_rejection_rate(int experiments, int n, double alpha, std::uint64_t seed) {
  sdnet::Rng rng(seed);
  std::normal_distribution<double> normal;
  int rejected = 0;
  for (int e = 0; e < experiments; ++e) {
    sdnet::ScoredPredictions a, b;
    a.scores.resize(n);
    b.scores.resize(n);
    a.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      a.labels(i) = i % 2;
      const double signal = a.labels(i) + normal(rng);
      a.scores(i) = signal + normal(rng);
      b.scores(i) = signal + normal(rng);
    }
    b.labels = a.labels;
    if (sdnet::delong_test(a, b, sdnet::Alternative::ALess).p_one_tailed < alpha) ++rejected;
  }
  return double(rejected) / experiments;
}

}  // namespace oracle

#include "sdnet/tiler.hpp"

namespace oracle {

/// Every pixel lies inside at least one tile and no tile leaves the source.
inline bool grid_covers(const sdnet::TileGrid& g) {
  std::vector<unsigned char> hit(std::size_t(g.source_width) * std::size_t(g.source_height), 0);
  for (const auto& o : g.origins) {
    if (o.x < 0 || o.y < 0 || o.x + g.tile_size > g.source_width || o.y + g.tile_size > g.source_height) return false;
    for (int y = o.y; y < o.y + g.tile_size; ++y)
      std::fill_n(hit.begin() + std::ptrdiff_t(y) * g.source_width + o.x, g.tile_size, 1);
  }
  return std::all_of(hit.begin(), hit.end(), [](unsigned char h) { return h == 1; });
}

/// Origins per axis from the stride-plus-snap rule: ceil((L - t) / s) + 1, or 1 when the tile fits exactly.
inline int expected_axis_count(int length, int tile, int stride) {
  if (length == tile) return 1;
  return (length - tile + stride - 1) / stride + 1;
}

}  // namespace oracle
