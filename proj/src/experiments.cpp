#include "sdnet/experiments.hpp"

#include "sdnet/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace sdnet {

void Arm::validate() const {
  sd.validate();
  if (sd.active() && train.weight_decay != 0.0)
    throw InvalidArgument("arm '" + name + "': spectral decoupling arms must run without weight decay");
  train.validate(sd);
}

Arm weight_decay_arm(std::string name, TrainConfig base, double weight_decay, bool augment) {
  base.weight_decay = weight_decay;
  Arm a{std::move(name), base, SDConfig::off(), augment};
  a.validate();
  return a;
}

Arm spectral_arm(std::string name, TrainConfig base, const SDConfig& sd, bool augment) {
  base.weight_decay = 0.0;
  Arm a{std::move(name), base, sd, augment};
  a.validate();
  return a;
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Cutout: return "cutout";
    case ExperimentKind::Robustness: return "robustness";
    case ExperimentKind::StainComparison: return "stain_norm_comparison";
    case ExperimentKind::GridSearch: return "gridsearch";
    case ExperimentKind::Bench: return "bench";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::Cutout, ExperimentKind::Robustness, ExperimentKind::StainComparison,
                 ExperimentKind::GridSearch, ExperimentKind::Bench})
    if (s == to_string(k)) return k;
  if (s == "stain-compare") return ExperimentKind::StainComparison;
  throw InvalidArgument("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------- search space

std::vector<SDConfig> SearchSpace::points() const {
  validate();
  std::vector<SDConfig> out;
  if (variant == SDVariant::Eq1) {
    for (double l : lambdas) out.push_back(SDConfig::eq1(l));
  } else {
    for (double ln : lambdas)
      for (double gn : gammas)
        for (double lp : lambdas)
          for (double gp : gammas) out.push_back(SDConfig::eq2(ln, gn, lp, gp));
  }
  if (budget > 0 && std::size_t(budget) < out.size()) out.resize(std::size_t(budget));
  return out;
}

void SearchSpace::validate() const {
  if (variant == SDVariant::Off) throw InvalidArgument("search space needs variant eq1 or eq2");
  if (lambdas.empty()) throw InvalidArgument("lambda space is empty");
  if (variant == SDVariant::Eq2 && gammas.empty()) throw InvalidArgument("gamma space is empty");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw InvalidArgument("lambda values must be nonnegative");
  if (budget < 0) throw InvalidArgument("budget must be nonnegative");
}

// ---------------------------------------------------------------- config

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("seed '" + item + "' is not an unsigned integer");
    }
  }
  return out;
}

SDVariant parse_variant(const std::string& s) {
  if (s == "off" || s == "none") return SDVariant::Off;
  if (s == "eq1") return SDVariant::Eq1;
  if (s == "eq2") return SDVariant::Eq2;
  throw InvalidArgument("unknown penalty variant '" + s + "'");
}

Eigen::Vector3d parse_vector3(const Config& c, const std::string& key, const Eigen::Vector3d& fallback) {
  const auto v = c.get_list(key, {fallback(0), fallback(1), fallback(2)});
  if (v.size() != 3) throw InvalidArgument(key + " needs three values");
  return {v[0], v[1], v[2]};
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment.kind", "experiment.dataset", "experiment.seeds", "experiment.out", "experiment.jobs",
      "model.kind", "model.hidden",
      "train.epochs", "train.lr", "train.batch_size", "train.schedule", "train.center",
      "wd.weight_decay",
      "sd.variant", "sd.lambda", "sd.lambda_neg", "sd.gamma_neg", "sd.lambda_pos", "sd.gamma_pos",
      "search.variant", "search.lambdas", "search.gammas", "search.budget",
      "data.n_train", "data.n_test", "data.val_fraction",
      "texture.image_size", "texture.background", "texture.amplitude", "texture.noise_sigma",
      "texture.freq_low_min", "texture.freq_boundary", "texture.freq_high_max", "texture.ceiling",
      "cutout.count", "cutout.size", "cutout.fill", "cutout.rate_neg", "cutout.rate_pos", "cutout.test_rate_pos",
      "cutout.test_rate_neg", "cutout.max_attempts",
      "tissue.image_size", "tissue.nuclei_neg", "tissue.nuclei_pos", "tissue.nucleus_radius",
      "tissue.texture_amplitude", "tissue.texture_agreement", "tissue.h_background", "tissue.e_min",
      "tissue.e_max", "tissue.noise_sigma",
      "robustness.blur", "robustness.sharpen", "robustness.stain_h", "robustness.stain_e",
      "stain_shift.h", "stain_shift.e", "stain_shift.intensity_h", "stain_shift.intensity_e",
      "stain_shift.reference_images"};
  return keys;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  train.epochs = 30;
  train.base_lr = 0.1;
  train.batch_size = 64;
  for (auto k : {PerturbationKind::Blur, PerturbationKind::Sharpen, PerturbationKind::StainH, PerturbationKind::StainE})
    sweeps.push_back(PerturbationSweep::standard(k));
  shifted_stains.col(0) = Eigen::Vector3d(0.55, 0.76, 0.34).normalized();
  shifted_stains.col(1) = Eigen::Vector3d(0.15, 0.95, 0.27).normalized();
  shifted_intensity = {1.3, 0.7};
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  for (const auto& [key, value] : c.values())
    if (!known_keys().count(key)) throw InvalidArgument("unknown config key '" + key + "'");

  ExperimentConfig e;
  e.kind = parse_experiment_kind(c.get("experiment.kind", to_string(e.kind)));
  const std::string dataset = c.get("experiment.dataset", std::string(e.kind == ExperimentKind::Cutout ||
                                                                               e.kind == ExperimentKind::GridSearch
                                                                           ? "cutout"
                                                                           : "tissue"));
  if (dataset == "cutout") e.dataset = DatasetKind::Cutout;
  else if (dataset == "tissue") e.dataset = DatasetKind::Tissue;
  else throw InvalidArgument("unknown dataset '" + dataset + "'");
  if (c.has("experiment.seeds")) e.seeds = parse_seeds(c.get("experiment.seeds", std::string()));
  e.output_dir = c.get("experiment.out", e.output_dir);
  e.jobs = c.get("experiment.jobs", e.jobs);

  const std::string mk = c.get("model.kind", to_string(e.model.kind));
  if (mk == "linear") e.model.kind = ModelKind::Linear;
  else if (mk == "one_hidden") e.model.kind = ModelKind::OneHidden;
  else throw InvalidArgument("unknown model kind '" + mk + "'");
  e.model.hidden = c.get("model.hidden", e.model.hidden);

  e.train.epochs = c.get("train.epochs", e.train.epochs);
  e.train.batch_size = c.get("train.batch_size", e.train.batch_size);
  if (c.get("train.lr", std::string()) == "reference") e.train.base_lr = reference_learning_rate(e.train.batch_size);
  else e.train.base_lr = c.get("train.lr", e.train.base_lr);
  const std::string sched = c.get("train.schedule", std::string("cosine"));
  if (sched == "cosine") e.train.schedule = LrSchedule::Cosine;
  else if (sched == "constant") e.train.schedule = LrSchedule::Constant;
  else throw InvalidArgument("unknown schedule '" + sched + "'");
  e.center_inputs = c.get("train.center", e.dataset == DatasetKind::Tissue);
  e.weight_decay = c.get("wd.weight_decay", e.weight_decay);

  // The cutout study uses the class-wise penalty; the others the single-lambda one.
  const bool class_wise = e.kind == ExperimentKind::Cutout || e.kind == ExperimentKind::GridSearch;
  const SDVariant v = parse_variant(c.get("sd.variant", std::string(class_wise ? "eq2" : "eq1")));
  if (v == SDVariant::Eq1) {
    e.sd = SDConfig::eq1(c.get("sd.lambda", 0.01));
  } else if (v == SDVariant::Eq2) {
    e.sd = SDConfig::eq2(c.get("sd.lambda_neg", e.sd.lambda_neg), c.get("sd.gamma_neg", e.sd.gamma_neg),
                         c.get("sd.lambda_pos", e.sd.lambda_pos), c.get("sd.gamma_pos", e.sd.gamma_pos));
  } else {
    e.sd = SDConfig::off();
  }

  e.space.variant = parse_variant(c.get("search.variant", std::string("eq1")));
  e.space.lambdas = c.get_list("search.lambdas", e.space.lambdas);
  e.space.gammas = c.get_list("search.gammas", e.space.gammas);
  e.space.budget = c.get("search.budget", e.space.budget);

  e.n_train = c.get("data.n_train", e.n_train);
  e.n_test = c.get("data.n_test", e.n_test);
  e.val_fraction = c.get("data.val_fraction", e.val_fraction);

  auto& im = e.image;
  im.image_size = c.get("texture.image_size", im.image_size);
  im.background = c.get("texture.background", im.background);
  im.amplitude = c.get("texture.amplitude", im.amplitude);
  im.noise_sigma = c.get("texture.noise_sigma", im.noise_sigma);
  im.freq_low_min = c.get("texture.freq_low_min", im.freq_low_min);
  im.freq_boundary = c.get("texture.freq_boundary", im.freq_boundary);
  im.freq_high_max = c.get("texture.freq_high_max", im.freq_high_max);
  im.core_accuracy_ceiling = c.get("texture.ceiling", im.core_accuracy_ceiling);

  auto& cu = e.cutout;
  cu.n_cutouts = c.get("cutout.count", cu.n_cutouts);
  cu.cutout_size = c.get("cutout.size", cu.cutout_size);
  cu.fill = c.get("cutout.fill", cu.fill);
  cu.train_rate_neg = c.get("cutout.rate_neg", cu.train_rate_neg);
  cu.train_rate_pos = c.get("cutout.rate_pos", cu.train_rate_pos);
  cu.test_rate_pos = c.get("cutout.test_rate_pos", cu.test_rate_pos);
  cu.test_rate_neg = c.get("cutout.test_rate_neg", cu.test_rate_neg);
  cu.max_attempts = c.get("cutout.max_attempts", cu.max_attempts);

  auto& ti = e.tissue;
  ti.image_size = c.get("tissue.image_size", ti.image_size);
  ti.nuclei_neg = c.get("tissue.nuclei_neg", ti.nuclei_neg);
  ti.nuclei_pos = c.get("tissue.nuclei_pos", ti.nuclei_pos);
  ti.nucleus_radius = c.get("tissue.nucleus_radius", ti.nucleus_radius);
  ti.texture_amplitude = c.get("tissue.texture_amplitude", ti.texture_amplitude);
  ti.texture_agreement = c.get("tissue.texture_agreement", ti.texture_agreement);
  ti.h_background = c.get("tissue.h_background", ti.h_background);
  ti.e_min = c.get("tissue.e_min", ti.e_min);
  ti.e_max = c.get("tissue.e_max", ti.e_max);
  ti.noise_sigma = c.get("tissue.noise_sigma", ti.noise_sigma);

  const char* sweep_keys[] = {"robustness.blur", "robustness.sharpen", "robustness.stain_h", "robustness.stain_e"};
  for (std::size_t k = 0; k < e.sweeps.size(); ++k) e.sweeps[k].levels = c.get_list(sweep_keys[k], e.sweeps[k].levels);

  e.shifted_stains.col(0) = parse_vector3(c, "stain_shift.h", e.shifted_stains.col(0)).normalized();
  e.shifted_stains.col(1) = parse_vector3(c, "stain_shift.e", e.shifted_stains.col(1)).normalized();
  e.shifted_intensity(0) = c.get("stain_shift.intensity_h", e.shifted_intensity(0));
  e.shifted_intensity(1) = c.get("stain_shift.intensity_e", e.shifted_intensity(1));
  e.reference_images = c.get("stain_shift.reference_images", e.reference_images);

  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw InvalidArgument("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw InvalidArgument("seeds must be distinct");
  if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
  if (model.kind == ModelKind::OneHidden && model.hidden < 1) throw InvalidArgument("hidden width must be >= 1");
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be nonnegative");
  train.validate(SDConfig::off());
  sd.validate();
  if (n_train < 2 || n_test < 2) throw InvalidArgument("n_train and n_test must be >= 2");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must lie in [0,1)");
  image.validate();
  cutout.validate(image.image_size);
  tissue.validate();
  for (const auto& s : sweeps) s.validate();
  for (int c = 0; c < 2; ++c)
    if ((shifted_stains.col(c).array() < 0.0).any()) throw InvalidArgument("shifted stain vectors must be nonnegative");
  if ((shifted_intensity.array() <= 0.0).any()) throw InvalidArgument("shifted intensities must be positive");
  if (reference_images < 1) throw InvalidArgument("reference_images must be >= 1");
}

// ---------------------------------------------------------------- shared plumbing

DatasetSplits make_splits(const ExperimentConfig& cfg, std::uint64_t seed, bool control) {
  if (cfg.dataset == DatasetKind::Cutout) {
    CutoutSpec spec = cfg.cutout;
    if (control) {
      spec.control = true;
      spec.train_rate_neg = spec.train_rate_pos = 1.0;
    }
    return make_cutout_dataset(cfg.image, spec, cfg.n_train, cfg.n_test, seed, cfg.val_fraction);
  }
  DatasetSplits s;
  const LabeledDataset pool = make_tissue_dataset(cfg.tissue, cfg.n_train, Split::Train, derive_seed(seed, 1),
                                                  default_he_stains());
  if (cfg.val_fraction > 0.0) {
    std::tie(s.train, s.val) = stratified_split(pool, cfg.val_fraction, derive_seed(seed, 2));
  } else {
    s.train = pool;
  }
  s.test = make_tissue_dataset(cfg.tissue, cfg.n_test, Split::Test, derive_seed(seed, 3), default_he_stains());
  return s;
}

TrainResult train_arm(const ExperimentConfig& cfg, const Arm& arm, const DatasetSplits& splits, std::uint64_t seed) {
  arm.validate();
  TrainConfig tc = arm.train;
  tc.seed = seed;
  TrainOptions opt;
  if (splits.val.size() > 0) opt.validation = &splits.val;
  if (arm.augment) opt.augment = crop_flip_augmenter(splits.train.shape);
  opt.center_inputs = cfg.center_inputs;
  return train(cfg.model.init(splits.train.dim(), seed), splits.train, tc, arm.sd, opt);
}

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  if (count <= 0) return;
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex m;
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1));
}

// ---------------------------------------------------------------- grid search

namespace {

double lambda_total(const SDConfig& s) { return s.variant == SDVariant::Eq1 ? s.lambda : s.lambda_neg + s.lambda_pos; }
double gamma_total(const SDConfig& s) {
  return s.variant == SDVariant::Eq1 ? 0.0 : std::abs(s.gamma_neg) + std::abs(s.gamma_pos);
}

}  // namespace

GridResult grid_search(const SearchSpace& space, const PointEvaluator& evaluate, int jobs) {
  const auto points = space.points();
  GridResult out;
  out.rows.resize(points.size());
  parallel_for(int(points.size()), jobs, [&](int i) {
    GridRow& row = out.rows[std::size_t(i)];
    row.sd = points[std::size_t(i)];
    try {
      row.val_metric = evaluate(row.sd);
      if (!std::isfinite(row.val_metric)) throw TrainingError("non-finite validation metric");
    } catch (const Error& e) {
      row.failed = true;
      row.val_metric = std::numeric_limits<double>::quiet_NaN();
      row.error = e.kind() + ": " + e.what();
    }
  });
  const GridRow* best = nullptr;
  for (const auto& row : out.rows) {
    if (row.failed) continue;
    if (!best || row.val_metric > best->val_metric ||
        (row.val_metric == best->val_metric &&
         (lambda_total(row.sd) < lambda_total(best->sd) ||
          (lambda_total(row.sd) == lambda_total(best->sd) && gamma_total(row.sd) < gamma_total(best->sd)))))
      best = &row;
  }
  if (!best) throw TrainingError("every grid point failed");
  out.best = best->sd;
  out.best_metric = best->val_metric;
  return out;
}

GridResult grid_search(const ExperimentConfig& cfg, const DatasetSplits& splits) {
  if (splits.val.size() == 0) throw InvalidArgument("grid search needs a validation split");
  const std::uint64_t seed = cfg.seeds.front();
  return grid_search(
      cfg.space,
      [&](const SDConfig& sd) {
        const Arm arm = spectral_arm("search", cfg.train, sd, false);
        const auto model = train_arm(cfg, arm, splits, seed).model;
        return balanced_accuracy(binarize(predict_proba(model, splits.val)), splits.val.labels);
      },
      cfg.jobs);
}

GridResult run_grid_search(const ExperimentConfig& cfg) {
  cfg.validate();
  return grid_search(cfg, make_splits(cfg, cfg.seeds.front()));
}

// ---------------------------------------------------------------- experiments

namespace {

void summarize(ArmSummary& a) {
  a.accuracy_mean = mean(a.accuracy);
  a.accuracy_sd = sample_sd(a.accuracy);
  a.recall_mean = mean(a.recall);
  a.recall_sd = sample_sd(a.recall);
}

}  // namespace

CutoutReport run_cutout_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset != DatasetKind::Cutout) throw InvalidArgument("the cutout experiment needs the cutout dataset");
  const std::vector<Arm> arms{weight_decay_arm("weight_decay", cfg.train, cfg.weight_decay, false),
                              spectral_arm("spectral_decoupling", cfg.train, cfg.sd, false),
                              weight_decay_arm("control_weight_decay", cfg.train, cfg.weight_decay, false)};
  const int n_seeds = int(cfg.seeds.size());
  std::vector<double> acc(arms.size() * cfg.seeds.size()), rec(acc.size());
  parallel_for(int(acc.size()), cfg.jobs, [&](int job) {
    const int a = job / n_seeds, s = job % n_seeds;
    const std::uint64_t seed = cfg.seeds[std::size_t(s)];
    const DatasetSplits splits = make_splits(cfg, seed, a == 2);
    const auto model = train_arm(cfg, arms[std::size_t(a)], splits, seed).model;
    const auto pred = binarize(predict_proba(model, splits.test));
    acc[std::size_t(job)] = balanced_accuracy(pred, splits.test.labels);
    rec[std::size_t(job)] = recall(pred, splits.test.labels);
  });
  CutoutReport out;
  out.seeds = cfg.seeds;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmSummary s;
    s.arm = arms[a].name;
    s.accuracy.assign(acc.begin() + std::ptrdiff_t(a) * n_seeds, acc.begin() + std::ptrdiff_t(a + 1) * n_seeds);
    s.recall.assign(rec.begin() + std::ptrdiff_t(a) * n_seeds, rec.begin() + std::ptrdiff_t(a + 1) * n_seeds);
    summarize(s);
    out.arms.push_back(std::move(s));
  }
  return out;
}

RobustnessReport run_robustness_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Arm> arms{weight_decay_arm("weight_decay", cfg.train, cfg.weight_decay, false),
                              weight_decay_arm("weight_decay_augment", cfg.train, cfg.weight_decay, true),
                              spectral_arm("spectral_decoupling_augment", cfg.train, cfg.sd, true)};
  const int n_seeds = int(cfg.seeds.size());
  std::vector<Model<double>> models(arms.size() * cfg.seeds.size());
  std::vector<LabeledDataset> tests(cfg.seeds.size());
  parallel_for(int(models.size()), cfg.jobs, [&](int job) {
    const int a = job / n_seeds, s = job % n_seeds;
    const DatasetSplits splits = make_splits(cfg, cfg.seeds[std::size_t(s)]);
    models[std::size_t(job)] = train_arm(cfg, arms[std::size_t(a)], splits, cfg.seeds[std::size_t(s)]).model;
    if (a == 0) tests[std::size_t(s)] = splits.test;
  });

  // Each seed scores its own test set; the sweep then averages over seeds.
  const std::optional<StainMatrix> stains =
      cfg.dataset == DatasetKind::Tissue ? std::optional<StainMatrix>(default_he_stains()) : std::nullopt;
  RobustnessReport out;
  out.tables.assign(arms.size(), std::vector<SweepTable>(cfg.sweeps.size()));
  for (const auto& a : arms) out.arms.push_back(a.name);
  const int cells = int(arms.size() * cfg.sweeps.size());
  parallel_for(cells, cfg.jobs, [&](int cell) {
    const std::size_t a = std::size_t(cell) / cfg.sweeps.size(), k = std::size_t(cell) % cfg.sweeps.size();
    const auto& sweep = cfg.sweeps[k];
    std::vector<std::vector<double>> per_level(sweep.levels.size());
    for (int s = 0; s < n_seeds; ++s) {
      const auto one = run_sweep({models[a * std::size_t(n_seeds) + std::size_t(s)]}, tests[std::size_t(s)], sweep,
                                 stains);
      for (std::size_t l = 0; l < sweep.levels.size(); ++l) per_level[l].push_back(one.rows[l].mean_balanced_accuracy);
    }
    SweepTable t;
    t.kind = sweep.kind;
    for (std::size_t l = 0; l < sweep.levels.size(); ++l)
      t.rows.push_back({sweep.levels[l], mean(per_level[l]), sample_sd(per_level[l]), n_seeds});
    out.tables[a][k] = std::move(t);
  });
  return out;
}

namespace {

/// Normalizes every image, leaving images whose stain estimate fails as-is.
LabeledDataset normalize_dataset(const LabeledDataset& data, const StainReference& ref, int& failures) {
  LabeledDataset out = data;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    try {
      out.set_image(i, normalize_to_reference(data.image(i), ref));
    } catch (const NoTissueError&) {
      ++failures;
    } catch (const DegenerateError&) {
      ++failures;
    }
  }
  return out;
}

}  // namespace

StainComparisonReport run_stain_norm_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset != DatasetKind::Tissue) throw InvalidArgument("the stain comparison needs the tissue dataset");
  const std::vector<Arm> arms{weight_decay_arm("weight_decay", cfg.train, cfg.weight_decay, false),
                              spectral_arm("spectral_decoupling", cfg.train, cfg.sd, false)};
  const int n_seeds = int(cfg.seeds.size());

  struct SeedData {
    LabeledDataset shifted_raw, shifted_norm, plain_raw, plain_norm;
    int failures = 0;
  };
  std::vector<SeedData> data(cfg.seeds.size());
  parallel_for(n_seeds, cfg.jobs, [&](int s) {
    const std::uint64_t seed = cfg.seeds[std::size_t(s)];
    const DatasetSplits splits = make_splits(cfg, seed);
    std::vector<Image> refs;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(cfg.reference_images, splits.train.size()); ++i)
      refs.push_back(splits.train.image(i));
    const StainReference ref = make_reference(refs);
    SeedData& d = data[std::size_t(s)];
    d.plain_raw = splits.test;
    d.shifted_raw = make_tissue_dataset(cfg.tissue, cfg.n_test, Split::Test, derive_seed(seed, 3), cfg.shifted_stains,
                                        cfg.shifted_intensity);
    d.plain_norm = normalize_dataset(d.plain_raw, ref, d.failures);
    d.shifted_norm = normalize_dataset(d.shifted_raw, ref, d.failures);
  });

  std::vector<std::array<double, 4>> scores(arms.size() * cfg.seeds.size());
  parallel_for(int(scores.size()), cfg.jobs, [&](int job) {
    const int a = job / n_seeds, s = job % n_seeds;
    const std::uint64_t seed = cfg.seeds[std::size_t(s)];
    const auto model = train_arm(cfg, arms[std::size_t(a)], make_splits(cfg, seed), seed).model;
    const SeedData& d = data[std::size_t(s)];
    auto score = [&](const LabeledDataset& t) { return balanced_accuracy(binarize(predict_proba(model, t)), t.labels); };
    scores[std::size_t(job)] = {score(d.shifted_raw), score(d.shifted_norm), score(d.plain_raw), score(d.plain_norm)};
  });

  StainComparisonReport out;
  for (const auto& d : data) out.normalization_failures += d.failures;
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (int norm = 0; norm < 2; ++norm) {
      std::vector<double> shifted, plain;
      for (int s = 0; s < n_seeds; ++s) {
        shifted.push_back(scores[a * std::size_t(n_seeds) + std::size_t(s)][std::size_t(norm)]);
        plain.push_back(scores[a * std::size_t(n_seeds) + std::size_t(s)][std::size_t(2 + norm)]);
      }
      out.rows.push_back({arms[a].name, norm == 1, mean(shifted), mean(plain)});
    }
  return out;
}

// ---------------------------------------------------------------- reports

namespace {

std::string sd_to_string(const SDConfig& s) {
  switch (s.variant) {
    case SDVariant::Off: return "off";
    case SDVariant::Eq1: return "eq1";
    case SDVariant::Eq2: return "eq2";
  }
  return "?";
}

}  // namespace

Table grid_table(const GridResult& r) {
  Table t;
  t.header = {"variant", "lambda", "lambda_neg", "gamma_neg", "lambda_pos", "gamma_pos", "val_balanced_accuracy",
              "status"};
  for (const auto& row : r.rows) {
    const auto& s = row.sd;
    const bool eq1 = s.variant == SDVariant::Eq1;
    t.add_row({sd_to_string(s), eq1 ? format_number(s.lambda) : "", eq1 ? "" : format_number(s.lambda_neg),
               eq1 ? "" : format_number(s.gamma_neg), eq1 ? "" : format_number(s.lambda_pos),
               eq1 ? "" : format_number(s.gamma_pos), format_number(row.val_metric),
               row.failed ? "failed: " + row.error : "ok"});
  }
  return t;
}

Table cutout_table(const CutoutReport& r) {
  Table t;
  t.header = {"arm", "accuracy_mean", "accuracy_sd", "recall_mean", "recall_sd"};
  for (const auto& a : r.arms)
    t.add_row({a.arm, format_number(a.accuracy_mean), format_number(a.accuracy_sd), format_number(a.recall_mean),
               format_number(a.recall_sd)});
  return t;
}

Table cutout_runs_table(const CutoutReport& r) {
  Table t;
  t.header = {"arm", "seed", "accuracy", "recall"};
  for (const auto& a : r.arms)
    for (std::size_t s = 0; s < a.accuracy.size(); ++s)
      t.add_row({a.arm, std::to_string(r.seeds[s]), format_number(a.accuracy[s]), format_number(a.recall[s])});
  return t;
}

Table sweep_table(const RobustnessReport& r) {
  Table t;
  t.header = {"arm", "perturbation", "level", "balanced_accuracy_mean", "balanced_accuracy_sd", "n_seeds"};
  for (std::size_t a = 0; a < r.tables.size(); ++a)
    for (const auto& table : r.tables[a])
      for (const auto& row : table.rows)
        t.add_row({r.arms[a], to_string(table.kind), format_number(row.level), format_number(row.mean_balanced_accuracy),
                   format_number(row.sd), std::to_string(row.n_seeds)});
  return t;
}

Table stain_table(const StainComparisonReport& r) {
  Table t;
  t.header = {"arm", "normalized", "shifted_accuracy", "unshifted_accuracy"};
  for (const auto& row : r.rows)
    t.add_row({row.arm, row.normalized ? "1" : "0", format_number(row.shifted_accuracy),
               format_number(row.unshifted_accuracy)});
  return t;
}

Report make_report(const GridResult& r) {
  Report rep;
  rep.tables.emplace_back("grid.csv", grid_table(r));
  std::ostringstream s;
  s << "grid points: " << r.rows.size() << "\n";
  s << "best: " << to_string(r.best) << "\n";
  s << "best validation balanced accuracy: " << format_number(r.best_metric) << "\n";
  rep.summary = s.str();
  return rep;
}

Report make_report(const CutoutReport& r) {
  Report rep;
  rep.tables.emplace_back("cutout.csv", cutout_table(r));
  rep.tables.emplace_back("cutout_runs.csv", cutout_runs_table(r));
  std::ostringstream s;
  s << "arm accuracy(sd) recall(sd) over " << r.seeds.size() << " seeds\n";
  for (const auto& a : r.arms)
    s << a.arm << ' ' << format_number(a.accuracy_mean) << " (" << format_number(a.accuracy_sd) << ") "
      << format_number(a.recall_mean) << " (" << format_number(a.recall_sd) << ")\n";
  rep.summary = s.str();
  return rep;
}

Report make_report(const RobustnessReport& r) {
  Report rep;
  rep.tables.emplace_back("robustness.csv", sweep_table(r));
  if (!r.tables.empty()) {
    for (std::size_t k = 0; k < r.tables.front().size(); ++k) {
      std::vector<Series> series;
      for (std::size_t a = 0; a < r.tables.size(); ++a) {
        Series sr{r.arms[a], {}, {}};
        for (const auto& row : r.tables[a][k].rows) {
          sr.x.push_back(row.level);
          sr.y.push_back(row.mean_balanced_accuracy);
        }
        series.push_back(std::move(sr));
      }
      const std::string kind = to_string(r.tables.front()[k].kind);
      rep.charts.emplace_back("robustness_" + kind + ".svg",
                              svg_line_chart(series, kind, "level", "balanced accuracy"));
    }
  }
  std::ostringstream s;
  s << "arm perturbation first_level last_level (mean balanced accuracy)\n";
  for (std::size_t a = 0; a < r.tables.size(); ++a)
    for (const auto& t : r.tables[a])
      if (!t.rows.empty())
        s << r.arms[a] << ' ' << to_string(t.kind) << ' ' << format_number(t.rows.front().mean_balanced_accuracy) << ' '
          << format_number(t.rows.back().mean_balanced_accuracy) << '\n';
  rep.summary = s.str();
  return rep;
}

Report make_report(const StainComparisonReport& r) {
  Report rep;
  rep.tables.emplace_back("stain_comparison.csv", stain_table(r));
  std::ostringstream s;
  s << "arm normalized shifted unshifted\n";
  for (const auto& row : r.rows)
    s << row.arm << ' ' << row.normalized << ' ' << format_number(row.shifted_accuracy) << ' '
      << format_number(row.unshifted_accuracy) << '\n';
  s << "images left unnormalized: " << r.normalization_failures << '\n';
  rep.summary = s.str();
  return rep;
}

void emit_report(const Report& report, const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory + ": " + ec.message());
  const std::filesystem::path dir(directory);
  for (const auto& [name, table] : report.tables) write_csv(table, (dir / name).string());
  for (const auto& [name, svg] : report.charts) write_text(svg, (dir / name).string());
  write_text(report.summary, (dir / "summary.txt").string());
}

}  // namespace sdnet
