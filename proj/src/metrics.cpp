#include "sdnet/metrics.hpp"

#include "sdnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sdnet {

void ScoredPredictions::validate(bool need_both) const {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  if (scores.size() == 0) throw InvalidArgument("no predictions");
  bool seen[2] = {false, false};
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0 && labels(i) != 1) throw InvalidArgument("labels must be 0 or 1");
    if (!std::isfinite(scores(i))) throw InvalidArgument("non-finite score");
    seen[labels(i)] = true;
  }
  if (need_both && !(seen[0] && seen[1])) throw DegenerateError("both classes must be present");
}

Eigen::VectorXi binarize(const Eigen::VectorXd& scores, double cutoff) {
  return (scores.array() >= cutoff).cast<int>();
}

Confusion confusion(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels) {
  if (predicted.size() != labels.size()) throw InvalidArgument("predictions and labels differ in length");
  Confusion c;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const bool p = predicted(i) == 1, y = labels(i) == 1;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double balanced_accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels) {
  const auto c = confusion(predicted, labels);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw DegenerateError("balanced accuracy needs both classes");
  return 0.5 * (double(c.tp) / double(c.tp + c.fn) + double(c.tn) / double(c.tn + c.fp));
}

double recall(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels) {
  const auto c = confusion(predicted, labels);
  if (c.tp + c.fn == 0) throw DegenerateError("recall needs positive instances");
  return double(c.tp) / double(c.tp + c.fn);
}

double accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels) {
  const auto c = confusion(predicted, labels);
  return double(c.tp + c.tn) / double(labels.size());
}

Eigen::VectorXd midranks(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values(a) < values(b); });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j < n && values(order[j]) == values(order[i])) ++j;
    const double r = 0.5 * double(i + j - 1) + 1.0;
    for (Eigen::Index k = i; k < j; ++k) ranks(order[k]) = r;
    i = j;
  }
  return ranks;
}

double auroc(const ScoredPredictions& sp) {
  sp.validate(true);
  const Eigen::VectorXd r = midranks(sp.scores);
  double pos_rank_sum = 0.0;
  long m = 0;
  for (Eigen::Index i = 0; i < sp.size(); ++i)
    if (sp.labels(i) == 1) {
      pos_rank_sum += r(i);
      ++m;
    }
  const long n = long(sp.size()) - m;
  return (pos_rank_sum - double(m) * double(m + 1) / 2.0) / (double(m) * double(n));
}

RocCurve roc_curve(const ScoredPredictions& sp) {
  sp.validate(true);
  std::vector<Eigen::Index> order(sp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sp.scores(a) > sp.scores(b); });
  const double m = double(sp.labels.sum());
  const double n = double(sp.size()) - m;
  RocCurve c;
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = sp.scores(order[i]);
    for (; i < order.size() && sp.scores(order[i]) == t; ++i) (sp.labels(order[i]) == 1 ? tp : fp) += 1.0;
    c.fpr.push_back(fp / n);
    c.tpr.push_back(tp / m);
    c.thresholds.push_back(t);
  }
  return c;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  return area;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Structural components of one scorer: AUC plus the per-positive (V10) and
// per-negative (V01) placement values.
struct Components {
  double auc = 0.0;
  Eigen::VectorXd v10;
  Eigen::VectorXd v01;
};

Components structural_components(const ScoredPredictions& sp) {
  const Eigen::Index total = sp.size();
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < total; ++i) (sp.labels(i) == 1 ? pos : neg).push_back(i);
  const Eigen::Index m = Eigen::Index(pos.size()), n = Eigen::Index(neg.size());
  Eigen::VectorXd xs(m), ys(n);
  for (Eigen::Index i = 0; i < m; ++i) xs(i) = sp.scores(pos[i]);
  for (Eigen::Index j = 0; j < n; ++j) ys(j) = sp.scores(neg[j]);
  const Eigen::VectorXd tx = midranks(xs), ty = midranks(ys), tz = midranks(sp.scores);

  Components c;
  c.v10.resize(m);
  c.v01.resize(n);
  double pos_rank_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    pos_rank_sum += tz(pos[i]);
    c.v10(i) = (tz(pos[i]) - tx(i)) / double(n);
  }
  for (Eigen::Index j = 0; j < n; ++j) c.v01(j) = 1.0 - (tz(neg[j]) - ty(j)) / double(m);
  c.auc = (pos_rank_sum - double(m) * double(m + 1) / 2.0) / (double(m) * double(n));
  return c;
}

double covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  return ((a.array() - ma) * (b.array() - mb)).sum() / double(a.size() - 1);
}

}  // namespace

DeLongResult delong_test(const ScoredPredictions& a, const ScoredPredictions& b, Alternative alternative) {
  a.validate(true);
  b.validate(true);
  if (a.size() != b.size() || a.labels != b.labels)
    throw InvalidArgument("delong_test needs paired predictions over identical labels");
  const auto ca = structural_components(a), cb = structural_components(b);
  const double m = double(ca.v10.size()), n = double(ca.v01.size());
  if (m < 2 || n < 2) throw DegenerateError("delong_test needs at least two instances per class");

  const double var_a = covariance(ca.v10, ca.v10) / m + covariance(ca.v01, ca.v01) / n;
  const double var_b = covariance(cb.v10, cb.v10) / m + covariance(cb.v01, cb.v01) / n;
  const double cov_ab = covariance(ca.v10, cb.v10) / m + covariance(ca.v01, cb.v01) / n;
  const double var = var_a + var_b - 2.0 * cov_ab;
  if (!(var > 1e-15 * std::max(var_a + var_b, 1e-300)))
    throw DegenerateError("AUC difference has zero variance; comparison is not testable");

  DeLongResult r;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  r.z = (ca.auc - cb.auc) / std::sqrt(var);
  r.p_one_tailed = alternative == Alternative::ALess ? normal_cdf(r.z) : normal_cdf(-r.z);
  if (r.p_one_tailed < kMinReportedP) {
    r.p_one_tailed = kMinReportedP;
    r.p_underflow = true;
  }
  return r;
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double pos = q * double(sorted.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_ci(const ScoredPredictions& sp, const Statistic& statistic, int n_boot, double level,
                      std::uint64_t seed) {
  sp.validate(true);
  if (n_boot < 1) throw InvalidArgument("n_boot must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must lie in (0,1)");
  const Eigen::Index n = sp.size();
  const long max_draws = 10L * n_boot;
  std::vector<double> stats;
  stats.reserve(std::size_t(n_boot));
  ScoredPredictions resample{Eigen::VectorXd(n), Eigen::VectorXi(n)};
  for (long draw = 0; long(stats.size()) < n_boot; ++draw) {
    if (draw >= max_draws) throw DegenerateError("too many single-class bootstrap resamples");
    Rng rng = make_rng(seed, std::uint64_t(draw));
    int classes = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = Eigen::Index(rng() % std::uint64_t(n));
      resample.scores(i) = sp.scores(k);
      resample.labels(i) = sp.labels(k);
      classes |= 1 << sp.labels(k);
    }
    if (classes != 3) continue;
    stats.push_back(statistic(resample));
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  return {sorted_quantile(stats, tail), sorted_quantile(stats, 1.0 - tail)};
}

ScoredPredictions ensemble_mean(const std::vector<ScoredPredictions>& members) {
  if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  ScoredPredictions out{Eigen::VectorXd::Zero(members.front().size()), members.front().labels};
  for (const auto& m : members) {
    m.validate(false);
    if (m.size() != out.size() || m.labels != out.labels)
      throw InvalidArgument("ensemble members cover different instances");
    out.scores += m.scores;
  }
  out.scores /= double(members.size());
  return out;
}

}  // namespace sdnet
