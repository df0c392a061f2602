#pragma once

#include "sdnet/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace sdnet {

/// Scores in [0,1] paired with binary labels.
struct ScoredPredictions {
  Eigen::VectorXd scores;
  Eigen::VectorXi labels;

  Eigen::Index size() const { return scores.size(); }
  /// Throws unless lengths agree and labels are binary; `need_both` also
  /// requires at least one instance of each class.
  void validate(bool need_both) const;
};

/// 1 where score >= cutoff.
Eigen::VectorXi binarize(const Eigen::VectorXd& scores, double cutoff = 0.5);

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};
Confusion confusion(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels);

/// Mean of per-class recalls. Throws when either class is absent from `labels`.
double balanced_accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels);
/// TP / (TP + FN). Throws when there are no positives.
double recall(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels);
double accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels);

/// 1-based midranks (ties share the average rank).
Eigen::VectorXd midranks(const Eigen::VectorXd& values);

/// Mann–Whitney AUROC with ties counted as one half.
double auroc(const ScoredPredictions& sp);

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;  // +inf for the (0,0) point
};

/// One point per distinct score, swept from the highest threshold down.
RocCurve roc_curve(const ScoredPredictions& sp);
double trapezoid_area(const RocCurve& curve);

enum class Alternative { ALess, AGreater };

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p_one_tailed = 1.0;
  bool p_underflow = false;  // p was below kMinReportedP and clamped to it
};

inline constexpr double kMinReportedP = 1e-300;

/// Paired one-tailed DeLong comparison of two score vectors over the same
/// instances. ALess tests H1: AUC(a) < AUC(b).
/// Throws DegenerateError when the variance of the difference is zero.
DeLongResult delong_test(const ScoredPredictions& a, const ScoredPredictions& b, Alternative alternative);

/// Standard normal CDF.
double normal_cdf(double z);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

using Statistic = std::function<double(const ScoredPredictions&)>;

/// Percentile bootstrap. Resamples missing a class are redrawn, up to
/// 10·n_boot draws in total.
Interval bootstrap_ci(const ScoredPredictions& sp, const Statistic& statistic, int n_boot = 1000, double level = 0.95,
                      std::uint64_t seed = 0);
inline Interval bootstrap_ci(const ScoredPredictions& sp, int n_boot = 1000, double level = 0.95,
                             std::uint64_t seed = 0) {
  return bootstrap_ci(sp, auroc, n_boot, level, seed);
}

/// Elementwise mean of member scores; all members must share labels.
ScoredPredictions ensemble_mean(const std::vector<ScoredPredictions>& members);

/// Linear-interpolated quantile of already sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q);

}  // namespace sdnet
