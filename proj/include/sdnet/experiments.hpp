#pragma once

#include "sdnet/config.hpp"
#include "sdnet/csv.hpp"
#include "sdnet/loss.hpp"
#include "sdnet/model.hpp"
#include "sdnet/perturb.hpp"
#include "sdnet/stain.hpp"
#include "sdnet/synthgen.hpp"
#include "sdnet/train.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sdnet {

struct ModelSpec {
  ModelKind kind = ModelKind::OneHidden;
  int hidden = 64;

  Model<double> init(Eigen::Index input_dim, std::uint64_t seed) const {
    return init_model(kind, input_dim, kind == ModelKind::Linear ? 0 : hidden, seed);
  }
};

/// A training recipe compared across seeds. Weight-decay arms run without the
/// logit penalty and penalty arms without weight decay.
struct Arm {
  std::string name;
  TrainConfig train;
  SDConfig sd;
  bool augment = false;

  void validate() const;
};

Arm weight_decay_arm(std::string name, TrainConfig base, double weight_decay, bool augment);
Arm spectral_arm(std::string name, TrainConfig base, const SDConfig& sd, bool augment);

enum class ExperimentKind { Cutout, Robustness, StainComparison, GridSearch, Bench };
std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

struct SearchSpace {
  SDVariant variant = SDVariant::Eq1;
  std::vector<double> lambdas{0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6};
  std::vector<double> gammas{-1.0, 0.0, 1.0, 2.0};
  /// Evaluates only the first `budget` points in enumeration order; 0 means all.
  int budget = 0;

  /// Eq1: one point per lambda. Eq2: nested (lambda_neg, gamma_neg, lambda_pos, gamma_pos).
  std::vector<SDConfig> points() const;
  void validate() const;
};

/// Which synthetic problem an experiment trains on.
enum class DatasetKind { Cutout, Tissue };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Cutout;
  DatasetKind dataset = DatasetKind::Cutout;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "results";
  int jobs = 1;

  ModelSpec model;
  TrainConfig train;
  bool center_inputs = false;
  double weight_decay = 1e-4;
  SDConfig sd = SDConfig::eq2(0.3, 1.83, 0.000698, 2.61);
  SearchSpace space;

  int n_train = 4000;
  int n_test = 1000;
  double val_fraction = 0.1;
  SyntheticImageSpec image;
  CutoutSpec cutout;
  TissueSpec tissue;

  /// Sweeps run by the robustness experiment, one per perturbation kind.
  std::vector<PerturbationSweep> sweeps;
  /// Stain vectors and H/E intensity used to render the shifted test set.
  StainMatrix shifted_stains;
  Eigen::Vector2d shifted_intensity{1.0, 1.0};
  /// Training images pooled into the normalization reference.
  int reference_images = 200;

  ExperimentConfig();
  /// Reads the sectioned key=value format; unknown keys are rejected. Tissue
  /// runs center inputs unless told otherwise, and the penalty defaults to
  /// the class-wise form for cutout and grid search, eq1(0.01) elsewhere.
  static ExperimentConfig from_config(const Config& cfg);
  void validate() const;
};

/// Train/val/test for the configured dataset and one seed.
DatasetSplits make_splits(const ExperimentConfig& cfg, std::uint64_t seed, bool control = false);

/// Trains one arm on `splits` with `seed`; validation feeds the epoch trace.
TrainResult train_arm(const ExperimentConfig& cfg, const Arm& arm, const DatasetSplits& splits, std::uint64_t seed);

/// Runs `count` independent jobs on up to `jobs` threads. Results are stored
/// by index, so output never depends on scheduling. The first exception is
/// rethrown after all threads join.
void parallel_for(int count, int jobs, const std::function<void(int)>& body);

// ---------------------------------------------------------------- grid search

struct GridRow {
  SDConfig sd;
  double val_metric = 0.0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  SDConfig best;
  double best_metric = 0.0;
  std::vector<GridRow> rows;
};

using PointEvaluator = std::function<double(const SDConfig&)>;

/// Exhaustive search. Failed points are kept in the table and skipped; ties
/// go to the smaller total lambda, then the smaller total |gamma|.
GridResult grid_search(const SearchSpace& space, const PointEvaluator& evaluate, int jobs = 1);
/// Trains one model per point on `splits.train` with the first seed and
/// scores validation balanced accuracy.
GridResult grid_search(const ExperimentConfig& cfg, const DatasetSplits& splits);
GridResult run_grid_search(const ExperimentConfig& cfg);

// ---------------------------------------------------------------- experiments

struct ArmSummary {
  std::string arm;
  std::vector<double> accuracy;  // per seed, balanced
  std::vector<double> recall;
  double accuracy_mean = 0.0, accuracy_sd = 0.0;
  double recall_mean = 0.0, recall_sd = 0.0;
};

struct CutoutReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmSummary> arms;  // weight decay, spectral decoupling, control
};

CutoutReport run_cutout_experiment(const ExperimentConfig& cfg);

struct RobustnessReport {
  std::vector<std::string> arms;         // WD, WD + augment, SD + augment
  std::vector<std::vector<SweepTable>> tables;  // [arm][sweep]
};

RobustnessReport run_robustness_experiment(const ExperimentConfig& cfg);

struct StainComparisonRow {
  std::string arm;
  bool normalized = false;
  double shifted_accuracy = 0.0;    // mean over seeds
  double unshifted_accuracy = 0.0;
};

struct StainComparisonReport {
  std::vector<StainComparisonRow> rows;  // arm-major: (WD, raw), (WD, norm), (SD, raw), (SD, norm)
  int normalization_failures = 0;        // images left unnormalized
};

StainComparisonReport run_stain_norm_comparison(const ExperimentConfig& cfg);

// ---------------------------------------------------------------- reports

double mean(const std::vector<double>& v);
/// Sample standard deviation; 0 for fewer than two values.
double sample_sd(const std::vector<double>& v);

struct Report {
  std::vector<std::pair<std::string, Table>> tables;       // file name, table
  std::vector<std::pair<std::string, std::string>> charts;  // file name, SVG
  std::string summary;
};

Table grid_table(const GridResult& r);
Table cutout_table(const CutoutReport& r);
Table cutout_runs_table(const CutoutReport& r);
Table sweep_table(const RobustnessReport& r);
Table stain_table(const StainComparisonReport& r);

Report make_report(const GridResult& r);
Report make_report(const CutoutReport& r);
Report make_report(const RobustnessReport& r);
Report make_report(const StainComparisonReport& r);

/// Writes every table as CSV, every chart as SVG and the summary as
/// summary.txt. Throws IoError when the directory cannot be written.
void emit_report(const Report& report, const std::string& directory);

}  // namespace sdnet
