#include "oracles.hpp"

#include "sdnet/metrics.hpp"
#include "sdnet/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sdnet;

namespace {

ScoredPredictions random_predictions(int n, Rng& rng, int levels = 0) {
  ScoredPredictions sp;
  sp.scores.resize(n);
  sp.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    sp.labels(i) = int(rng() & 1);
    const double u = uniform01(rng);
    sp.scores(i) = levels > 0 ? std::floor(u * levels) / levels : u;
  }
  sp.labels(0) = 0;
  sp.labels(1) = 1;
  return sp;
}

Eigen::VectorXi vec(std::initializer_list<int> v) {
  Eigen::VectorXi out(Eigen::Index(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

}  // namespace

TEST_CASE("binarize: cutoff rule and ties") {
  Eigen::VectorXd s(3);
  s << 0.2, 0.5, 0.8;
  CHECK(binarize(s) == vec({0, 1, 1}));
  CHECK(binarize(Eigen::VectorXd::Constant(4, 0.5)) == Eigen::VectorXi::Ones(4));
  Rng rng(3);
  const auto sp = random_predictions(50, rng);
  const auto b = binarize(sp.scores, 0.3);
  for (int i = 0; i < 50; ++i) CHECK(b(i) == (sp.scores(i) >= 0.3 ? 1 : 0));
}

TEST_CASE("balanced_accuracy and recall") {
  const auto y = vec({0, 0, 1, 1, 1});
  CHECK(balanced_accuracy(y, y) == 1.0);
  CHECK(balanced_accuracy(Eigen::VectorXi::Ones(5), y) == 0.5);
  CHECK(recall(Eigen::VectorXi::Ones(5), y) == 1.0);
  CHECK_THROWS_AS(balanced_accuracy(y, Eigen::VectorXi::Ones(5)), DegenerateError);
  CHECK_THROWS_AS(recall(y, Eigen::VectorXi::Zero(5)), DegenerateError);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto sp = random_predictions(40, rng);
    const auto p = binarize(sp.scores);
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (int i = 0; i < 40; ++i) {
      if (sp.labels(i) == 1) (p(i) ? tp : fn) += 1;
      else (p(i) ? fp : tn) += 1;
    }
    CHECK(balanced_accuracy(p, sp.labels) == doctest::Approx(0.5 * (tp / (tp + fn) + tn / (tn + fp))));
    CHECK(recall(p, sp.labels) == doctest::Approx(tp / (tp + fn)));
    const auto c = confusion(p, sp.labels);
    CHECK(c.tp == long(tp));
    CHECK(c.fp == long(fp));
  }
}

TEST_CASE("midranks share tied ranks") {
  Eigen::VectorXd v(5);
  v << 3, 1, 3, 2, 3;
  Eigen::VectorXd expected(5);
  expected << 4, 1, 4, 2, 4;
  CHECK(midranks(v) == expected);
}

TEST_CASE("auroc: trivial cases and brute-force agreement") {
  ScoredPredictions sp{Eigen::VectorXd(4), vec({0, 0, 1, 1})};
  sp.scores << 0.1, 0.2, 0.8, 0.9;
  CHECK(auroc(sp) == 1.0);
  sp.scores.setConstant(0.4);
  CHECK(auroc(sp) == 0.5);

  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const auto r = random_predictions(2 + int(rng() % 7), rng, 4);
    CHECK(auroc(r) == oracle::pairwise_auroc(r.scores, r.labels));
  }
}

TEST_CASE("auroc: invariance and complement symmetry") {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    auto sp = random_predictions(60, rng);
    const double base = auroc(sp);
    auto mapped = sp;
    mapped.scores = sp.scores.array().cube().exp();
    CHECK(auroc(mapped) == doctest::Approx(base).epsilon(1e-15));
    auto flipped = sp;
    flipped.scores = -sp.scores;
    CHECK(auroc(flipped) + base == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("roc_curve endpoints and trapezoid area") {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto sp = random_predictions(80, rng);
    const auto curve = roc_curve(sp);
    CHECK(curve.fpr.front() == 0.0);
    CHECK(curve.tpr.front() == 0.0);
    CHECK(curve.fpr.back() == 1.0);
    CHECK(curve.tpr.back() == 1.0);
    CHECK(std::is_sorted(curve.fpr.begin(), curve.fpr.end()));
    CHECK(std::abs(trapezoid_area(curve) - auroc(sp)) < 1e-12);
  }
}

TEST_CASE("delong: identical scorers are degenerate") {
  Rng rng(6);
  const auto sp = random_predictions(30, rng);
  CHECK_THROWS_AS(delong_test(sp, sp, Alternative::ALess), DegenerateError);
}

TEST_CASE("delong: internal AUCs, antisymmetry and p-value consistency") {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    auto a = random_predictions(100, rng);
    auto b = a;
    for (int i = 0; i < 100; ++i) b.scores(i) = 0.5 * a.scores(i) + 0.5 * uniform01(rng) + 0.1 * a.labels(i);
    const auto ab = delong_test(a, b, Alternative::ALess);
    const auto ba = delong_test(b, a, Alternative::ALess);
    CHECK(ab.auc_a == auroc(a));
    CHECK(ab.auc_b == auroc(b));
    CHECK(ab.z == doctest::Approx(-ba.z).epsilon(1e-12));
    CHECK(ab.p_one_tailed == doctest::Approx(normal_cdf(ab.z)).epsilon(1e-12));
    const auto greater = delong_test(a, b, Alternative::AGreater);
    CHECK(greater.p_one_tailed + ab.p_one_tailed == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("delong: null calibration") {
  const double rate = oracle::delong_null_rejection_rate(400, 200, 0.05, 17);
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}

TEST_CASE("delong: extreme separation clamps the p-value") {
  const int n = 4000;
  ScoredPredictions a{Eigen::VectorXd(n), Eigen::VectorXi(n)}, b;
  Rng rng(2);
  for (int i = 0; i < n; ++i) {
    a.labels(i) = i % 2;
    a.scores(i) = uniform01(rng);
  }
  b = a;
  for (int i = 0; i < n; ++i) b.scores(i) = a.labels(i) + 0.01 * uniform01(rng) + (i % 7 == 0 ? 1.5 * uniform01(rng) - 0.75 : 0.0);
  const auto r = delong_test(a, b, Alternative::ALess);
  CHECK(r.p_one_tailed >= kMinReportedP);
  CHECK(r.p_one_tailed > 0.0);
  if (r.z < -37.5) CHECK(r.p_underflow);
}

TEST_CASE("bootstrap: separated data, determinism, containment") {
  ScoredPredictions sep{Eigen::VectorXd(200), Eigen::VectorXi(200)};
  for (int i = 0; i < 200; ++i) {
    sep.labels(i) = i % 2;
    sep.scores(i) = sep.labels(i) ? 0.9 : 0.1;
  }
  CHECK(bootstrap_ci(sep, 200, 0.95, 1) == Interval{1.0, 1.0});

  Rng rng(12);
  int contained = 0;
  for (int t = 0; t < 100; ++t) {
    auto sp = random_predictions(60, rng);
    for (int i = 0; i < 60; ++i) sp.scores(i) += 0.3 * sp.labels(i);
    const auto ci = bootstrap_ci(sp, 200, 0.95, std::uint64_t(t));
    CHECK(ci == bootstrap_ci(sp, 200, 0.95, std::uint64_t(t)));
    CHECK(ci.lo <= ci.hi);
    const double est = auroc(sp);
    contained += (ci.lo <= est && est <= ci.hi);
  }
  CHECK(contained == 100);
}

TEST_CASE("bootstrap: statistic other than auroc") {
  Rng rng(13);
  const auto sp = random_predictions(80, rng);
  const Statistic bacc = [](const ScoredPredictions& s) { return balanced_accuracy(binarize(s.scores), s.labels); };
  const auto ci = bootstrap_ci(sp, bacc, 300, 0.9, 4);
  CHECK(ci.lo <= ci.hi);
  CHECK(ci.lo >= 0.0);
  CHECK(ci.hi <= 1.0);
}

TEST_CASE("ensemble_mean") {
  ScoredPredictions a{Eigen::Vector2d(0, 1), vec({0, 1})}, b{Eigen::Vector2d(1, 0), vec({0, 1})};
  CHECK(ensemble_mean({a, b}).scores == Eigen::Vector2d(0.5, 0.5));
  CHECK(ensemble_mean({a, a, a, a, a}).scores == a.scores);

  Rng rng(14);
  std::vector<ScoredPredictions> members;
  auto first = random_predictions(25, rng);
  for (int m = 0; m < 5; ++m) {
    auto s = first;
    for (int i = 0; i < 25; ++i) s.scores(i) = uniform01(rng);
    members.push_back(s);
  }
  const auto mean = ensemble_mean(members);
  for (int i = 0; i < 25; ++i) {
    double total = 0;
    for (const auto& m : members) total += m.scores(i);
    CHECK(mean.scores(i) == doctest::Approx(total / 5).epsilon(1e-15));
  }
  auto other = members[1];
  other.labels(0) = 1 - other.labels(0);
  CHECK_THROWS_AS(ensemble_mean({members[0], other}), InvalidArgument);
}

TEST_CASE("validation of scored predictions") {
  ScoredPredictions bad{Eigen::Vector2d(0.1, 0.2), vec({0, 2})};
  CHECK_THROWS_AS(auroc(bad), InvalidArgument);
  ScoredPredictions one_class{Eigen::Vector2d(0.1, 0.2), vec({1, 1})};
  CHECK_THROWS(auroc(one_class));
  CHECK(sorted_quantile({1, 2, 3, 4}, 0.5) == 2.5);
}
