#include "sdnet/config.hpp"
#include "sdnet/csv.hpp"
#include "sdnet/experiments.hpp"
#include "sdnet/metrics.hpp"
#include "sdnet/perturb.hpp"
#include "sdnet/png_io.hpp"
#include "sdnet/stain.hpp"
#include "sdnet/tiler.hpp"
#include "sdnet/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace sdnet;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
};

/// Loads the config file (if any), pins the experiment kind to the
/// subcommand when the file does not name one, then applies global flags.
/// `strict` rejects a file written for a different experiment.
ExperimentConfig load_experiment(const Globals& g, ExperimentKind kind, bool strict = true) {
  Config c;
  if (!g.config.empty()) c = Config::load(g.config);
  if (!c.has("experiment.kind")) c.set("experiment.kind", to_string(kind));
  ExperimentConfig e = ExperimentConfig::from_config(c);
  if (strict && e.kind != kind)
    throw InvalidArgument("config names experiment '" + to_string(e.kind) + "' but the command runs '" +
                          to_string(kind) + "'");
  if (g.seed) e.seeds = {*g.seed};
  if (!g.out.empty()) e.output_dir = g.out;
  if (g.jobs) e.jobs = *g.jobs;
  e.validate();
  return e;
}

std::string out_dir(const Globals& g, const std::string& fallback) { return g.out.empty() ? fallback : g.out; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

// ---------------------------------------------------------------- train

void cmd_train(const Globals& g, const std::string& arm_name, bool augment) {
  ExperimentConfig e = load_experiment(g, ExperimentKind::Cutout, false);
  const std::uint64_t seed = e.seeds.front();
  const Arm arm = arm_name == "wd" ? weight_decay_arm("weight_decay", e.train, e.weight_decay, augment)
                                   : spectral_arm("spectral_decoupling", e.train, e.sd, augment);
  const DatasetSplits splits = make_splits(e, seed);
  const TrainResult r = train_arm(e, arm, splits, seed);

  ensure_dir(e.output_dir);
  const fs::path dir(e.output_dir);
  save_checkpoint(r.model, (dir / "model.txt").string());
  {
    std::ofstream os(dir / "trace.csv");
    write_trace_csv(r.trace, os);
  }
  const Eigen::VectorXd scores = predict_proba(r.model, splits.test);
  Table preds;
  preds.header = {"instance_id", "label", "score", "model_id"};
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    preds.add_row({std::to_string(i), std::to_string(splits.test.labels(i)), format_number(scores(i)), arm.name});
  write_csv(preds, (dir / "predictions.csv").string());
  const Eigen::VectorXi pred = binarize(scores);
  std::cout << "test balanced accuracy " << format_number(balanced_accuracy(pred, splits.test.labels))
            << " recall " << format_number(recall(pred, splits.test.labels)) << '\n';
}

// ---------------------------------------------------------------- experiments

template <typename Result>
void finish(const Result& r, const std::string& dir) {
  const Report rep = make_report(r);
  emit_report(rep, dir);
  std::cout << rep.summary;
}

// ---------------------------------------------------------------- evaluate

void cmd_evaluate(const Globals& g, const std::string& path, int n_boot, bool roc, bool svg) {
  const Table in = read_csv(path);
  const std::size_t id_col = in.column("instance_id");
  in.column("label");
  in.column("score");
  const bool has_model = std::find(in.header.begin(), in.header.end(), "model_id") != in.header.end();
  const std::size_t model_col = has_model ? in.column("model_id") : 0;

  // model id -> (instance id -> (label, score)), both in first-seen order
  std::vector<std::string> models;
  std::map<std::string, std::map<std::string, std::pair<int, double>>> by_model;
  std::vector<std::string> instances;
  for (std::size_t r = 0; r < in.rows.size(); ++r) {
    const std::string m = has_model ? in.rows[r][model_col] : "model";
    const std::string id = in.rows[r][id_col];
    if (!by_model.count(m)) models.push_back(m);
    auto& rows = by_model[m];
    if (rows.count(id)) throw InvalidArgument("duplicate instance '" + id + "' for model '" + m + "'");
    const double label = in.number(r, "label");
    if (label != 0.0 && label != 1.0) throw InvalidArgument("labels must be 0 or 1");
    rows[id] = {int(label), in.number(r, "score")};
    if (models.size() == 1 && m == models.front()) instances.push_back(id);
  }

  std::vector<ScoredPredictions> members;
  for (const auto& m : models) {
    const auto& rows = by_model[m];
    if (rows.size() != instances.size()) throw InvalidArgument("model '" + m + "' does not score every instance");
    ScoredPredictions sp;
    sp.scores.resize(Eigen::Index(instances.size()));
    sp.labels.resize(Eigen::Index(instances.size()));
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto it = rows.find(instances[i]);
      if (it == rows.end()) throw InvalidArgument("model '" + m + "' is missing instance '" + instances[i] + "'");
      sp.labels(Eigen::Index(i)) = it->second.first;
      sp.scores(Eigen::Index(i)) = it->second.second;
    }
    members.push_back(std::move(sp));
  }
  std::vector<std::pair<std::string, ScoredPredictions>> rows;
  for (std::size_t k = 0; k < models.size(); ++k) rows.emplace_back(models[k], members[k]);
  if (members.size() > 1) rows.emplace_back("ensemble", ensemble_mean(members));

  const std::string dir = out_dir(g, "evaluation");
  ensure_dir(dir);
  const std::uint64_t seed = g.seed.value_or(0);
  Table metrics;
  metrics.header = {"model_id", "n", "auroc", "auroc_ci_lo", "auroc_ci_hi", "balanced_accuracy", "recall"};
  std::vector<Series> curves;
  Table roc_table;
  roc_table.header = {"model_id", "threshold", "fpr", "tpr"};
  for (const auto& [name, sp] : rows) {
    sp.validate(true);
    const Interval ci = bootstrap_ci(sp, n_boot, 0.95, seed);
    const Eigen::VectorXi pred = binarize(sp.scores);
    metrics.add_row({name, std::to_string(sp.size()), format_number(auroc(sp)), format_number(ci.lo),
                     format_number(ci.hi), format_number(balanced_accuracy(pred, sp.labels)),
                     format_number(recall(pred, sp.labels))});
    if (roc || svg) {
      const RocCurve c = roc_curve(sp);
      for (std::size_t i = 0; i < c.fpr.size(); ++i)
        roc_table.add_row({name, format_number(c.thresholds[i]), format_number(c.fpr[i]), format_number(c.tpr[i])});
      curves.push_back({name, c.fpr, c.tpr});
    }
  }
  write_csv(metrics, (fs::path(dir) / "metrics.csv").string());
  if (roc || svg) write_csv(roc_table, (fs::path(dir) / "roc.csv").string());
  if (svg) write_text(svg_line_chart(curves, "ROC", "false positive rate", "true positive rate"),
                      (fs::path(dir) / "roc.svg").string());
  if (members.size() == 2) {
    const DeLongResult d = delong_test(members[0], members[1], Alternative::ALess);
    Table t;
    t.header = {"model_a", "model_b", "auc_a", "auc_b", "z", "p_one_tailed", "p_underflow"};
    t.add_row({models[0], models[1], format_number(d.auc_a), format_number(d.auc_b), format_number(d.z),
               format_number(d.p_one_tailed), d.p_underflow ? "1" : "0"});
    write_csv(t, (fs::path(dir) / "delong.csv").string());
  }
  write_csv(metrics, std::cout);
}

// ---------------------------------------------------------------- tile

void cmd_tile(const Globals& g, const std::string& input, int size, double overlap, double min_tissue,
              double saturation) {
  const Image8 img = read_png(input);
  const TileGrid grid = plan_grid(img.width, img.height, size, overlap);
  TissueFilter filter;
  filter.min_tissue_fraction = min_tissue;
  filter.saturation_threshold = saturation;
  const std::string dir = out_dir(g, "tiles");
  ensure_dir(dir);
  Table manifest;
  manifest.header = {"x", "y", "tissue_fraction", "kept", "path"};
  int kept = 0;
  for (const TileRecord& rec : scan_tiles(img, grid, filter)) {
    std::string name;
    if (rec.kept) {
      name = "x" + std::to_string(rec.origin.x) + "_y" + std::to_string(rec.origin.y) + ".png";
      write_png(crop(img, rec.origin.x, rec.origin.y, grid.tile_size, grid.tile_size), (fs::path(dir) / name).string());
      ++kept;
    }
    manifest.add_row({std::to_string(rec.origin.x), std::to_string(rec.origin.y), format_number(rec.tissue_fraction),
                      rec.kept ? "1" : "0", name});
  }
  write_csv(manifest, (fs::path(dir) / "manifest.csv").string());
  std::cout << "tiles " << grid.origins.size() << " kept " << kept << " stride " << grid.stride << '\n';
}

// ---------------------------------------------------------------- stain

void cmd_stain_separate(const Globals& g, const std::string& input) {
  const Image8 img = read_png(input);
  const StainReference ref = make_reference(std::vector<Image8>{img});
  ConcentrationMap c = separate(img, ref.stains);
  const std::string dir = out_dir(g, "stains");
  ensure_dir(dir);
  ConcentrationMap h = c, e = c;
  h.values.row(1).setZero();
  e.values.row(0).setZero();
  write_png(recombine<std::uint8_t>(ref.stains, h), (fs::path(dir) / "haematoxylin.png").string());
  write_png(recombine<std::uint8_t>(ref.stains, e), (fs::path(dir) / "eosin.png").string());
  save_reference(ref, (fs::path(dir) / "reference.txt").string());
  std::cout << "haematoxylin " << ref.stains.col(0).transpose() << "\neosin " << ref.stains.col(1).transpose()
            << "\nmax " << ref.max_concentration.transpose() << '\n';
}

void cmd_stain_modify(const std::string& input, const std::string& output, double m_h, double m_e) {
  write_png(modify_intensity(read_png(input), m_h, m_e), output);
}

void cmd_stain_normalize(const std::string& input, const std::string& output, const std::string& reference) {
  write_png(normalize_to_reference(read_png(input), load_reference(reference)), output);
}

void cmd_bench(const Globals& g, int images, int side) {
  const std::uint64_t seed = g.seed.value_or(1);
  std::vector<Image8> imgs;
  for (int i = 0; i < images; ++i)
    imgs.push_back(synthetic_he_image(side, side, default_he_stains(), derive_seed(seed, std::uint64_t(i))));
  const StainReference ref = make_reference(imgs);
  const ThroughputResult r = throughput_bench(imgs, ref);
  Table t;
  t.header = {"method", "images_per_s", "unit"};
  t.add_row({"sd_penalty", format_number(r.sd_penalty_images_per_s), std::to_string(r.sd_batch) + "x1 logits"});
  t.add_row({"macenko_normalization", format_number(r.macenko_images_per_s),
             std::to_string(side) + "x" + std::to_string(side) + " rgb"});
  if (!g.out.empty()) {
    ensure_dir(g.out);
    write_csv(t, (fs::path(g.out) / "bench.csv").string());
  }
  write_csv(t, std::cout);
  std::cout << "ratio " << format_number(r.sd_penalty_images_per_s / r.macenko_images_per_s) << '\n';
}

// ---------------------------------------------------------------- perturb

void cmd_perturb_sweep(const Globals& g, const std::string& kind_name, const std::vector<double>& levels,
                       const std::vector<std::string>& checkpoints, const std::string& out_csv, const std::string& svg) {
  ExperimentConfig e = load_experiment(g, ExperimentKind::Robustness, false);
  PerturbationSweep sweep = PerturbationSweep::standard(parse_perturbation_kind(kind_name));
  if (!levels.empty()) sweep.levels = levels;
  sweep.validate();
  if (checkpoints.empty()) throw InvalidArgument("at least one --checkpoint is required");
  std::vector<Model<double>> models;
  for (const auto& p : checkpoints) models.push_back(load_checkpoint(p));
  const DatasetSplits splits = make_splits(e, e.seeds.front());
  const std::optional<StainMatrix> stains =
      e.dataset == DatasetKind::Tissue ? std::optional<StainMatrix>(default_he_stains()) : std::nullopt;
  const SweepTable r = run_sweep(models, splits.test, sweep, stains);
  Table t;
  t.header = {"kind", "level", "mean_balanced_accuracy", "sd", "n_seeds"};
  Series s{to_string(r.kind), {}, {}};
  for (const auto& row : r.rows) {
    t.add_row({to_string(r.kind), format_number(row.level), format_number(row.mean_balanced_accuracy),
               format_number(row.sd), std::to_string(row.n_seeds)});
    s.x.push_back(row.level);
    s.y.push_back(row.mean_balanced_accuracy);
  }
  write_csv(t, out_csv);
  if (!svg.empty()) write_text(svg_line_chart({s}, to_string(r.kind), "level", "balanced accuracy"), svg);
  write_csv(t, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral decoupling experiments, stain tools and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Sectioned key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Parallel jobs")->check(CLI::PositiveNumber);

  std::function<void()> action;

  auto* train = app.add_subcommand("train", "Train one arm on the first seed and save model, trace and predictions");
  std::string arm = "sd";
  bool augment = false;
  train->add_option("--arm", arm, "wd or sd")->check(CLI::IsMember({"wd", "sd"}));
  train->add_flag("--augment", augment, "Random crop and flip augmentation");
  train->callback([&] { action = [&] { cmd_train(g, arm, augment); }; });

  auto* grid = app.add_subcommand("gridsearch", "Exhaustive penalty search scored on validation");
  grid->callback([&] {
    action = [&] {
      const auto e = load_experiment(g, ExperimentKind::GridSearch);
      finish(run_grid_search(e), e.output_dir);
    };
  });

  auto* cutout = app.add_subcommand("cutout", "Weight decay vs spectral decoupling vs control on the cutout set");
  cutout->callback([&] {
    action = [&] {
      const auto e = load_experiment(g, ExperimentKind::Cutout);
      finish(run_cutout_experiment(e), e.output_dir);
    };
  });

  auto* robust = app.add_subcommand("robustness", "Perturbation sweeps for the three robustness arms");
  robust->callback([&] {
    action = [&] {
      const auto e = load_experiment(g, ExperimentKind::Robustness);
      finish(run_robustness_experiment(e), e.output_dir);
    };
  });

  auto* compare = app.add_subcommand("stain-compare", "Accuracy on a stain-shifted test set with and without normalization");
  compare->callback([&] {
    action = [&] {
      const auto e = load_experiment(g, ExperimentKind::StainComparison);
      finish(run_stain_norm_comparison(e), e.output_dir);
    };
  });

  auto* evaluate = app.add_subcommand("evaluate", "Metrics from a prediction CSV");
  std::string predictions;
  int n_boot = 1000;
  bool roc = false;
  bool svg = false;
  evaluate->add_option("--predictions", predictions, "CSV with instance_id, label, score[, model_id]")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--n-boot", n_boot, "Bootstrap resamples")->check(CLI::PositiveNumber);
  evaluate->add_flag("--roc", roc, "Also write roc.csv");
  evaluate->add_flag("--svg", svg, "Also write roc.svg");
  evaluate->callback([&] { action = [&] { cmd_evaluate(g, predictions, n_boot, roc, svg); }; });

  auto* tile = app.add_subcommand("tile", "Cut a PNG into overlapping tiles");
  std::string tile_input;
  int tile_size = 1024;
  double overlap = 0.2, min_tissue = 0.1, saturation = 0.05;
  tile->add_option("--input", tile_input)->required()->check(CLI::ExistingFile);
  tile->add_option("--size", tile_size);
  tile->add_option("--overlap", overlap);
  tile->add_option("--min-tissue", min_tissue);
  tile->add_option("--saturation", saturation, "HSV saturation counted as tissue");
  tile->callback([&] { action = [&] { cmd_tile(g, tile_input, tile_size, overlap, min_tissue, saturation); }; });

  auto* stain = app.add_subcommand("stain", "Macenko stain tools");
  stain->require_subcommand(1);
  std::string s_input, s_output, s_reference;
  double m_h = 1.0, m_e = 1.0;
  auto* separate_cmd = stain->add_subcommand("separate", "Write single-stain images and the image's reference file");
  separate_cmd->add_option("--input", s_input)->required()->check(CLI::ExistingFile);
  separate_cmd->callback([&] { action = [&] { cmd_stain_separate(g, s_input); }; });
  auto* modify_cmd = stain->add_subcommand("modify", "Scale haematoxylin and eosin intensity");
  modify_cmd->add_option("--input", s_input)->required()->check(CLI::ExistingFile);
  modify_cmd->add_option("--output", s_output)->required();
  modify_cmd->add_option("--m-h", m_h);
  modify_cmd->add_option("--m-e", m_e);
  modify_cmd->callback([&] { action = [&] { cmd_stain_modify(s_input, s_output, m_h, m_e); }; });
  auto* normalize_cmd = stain->add_subcommand("normalize", "Map an image onto a reference stain file");
  normalize_cmd->add_option("--input", s_input)->required()->check(CLI::ExistingFile);
  normalize_cmd->add_option("--output", s_output)->required();
  normalize_cmd->add_option("--reference", s_reference)->required()->check(CLI::ExistingFile);
  normalize_cmd->callback([&] { action = [&] { cmd_stain_normalize(s_input, s_output, s_reference); }; });
  int bench_images = 20, bench_side = 224;
  auto* stain_bench = stain->add_subcommand("bench", "Penalty vs normalization throughput");
  stain_bench->add_option("--images", bench_images)->check(CLI::PositiveNumber);
  stain_bench->add_option("--side", bench_side)->check(CLI::PositiveNumber);
  stain_bench->callback([&] { action = [&] { cmd_bench(g, bench_images, bench_side); }; });

  auto* perturb = app.add_subcommand("perturb", "Perturbation sweeps over saved models");
  perturb->require_subcommand(1);
  auto* sweep_cmd = perturb->add_subcommand("sweep", "Score checkpoints across one perturbation sweep");
  std::string kind = "blur", sweep_out = "sweep.csv", sweep_svg;
  std::vector<double> levels;
  std::vector<std::string> checkpoints;
  sweep_cmd->add_option("--kind", kind)->check(CLI::IsMember({"blur", "sharpen", "stain-h", "stain-e"}));
  sweep_cmd->add_option("--levels", levels)->delimiter(',');
  sweep_cmd->add_option("--checkpoint", checkpoints, "Model file from train; repeat for seeds")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--csv", sweep_out, "Sweep CSV path");
  sweep_cmd->add_option("--svg", sweep_svg, "Optional chart path");
  sweep_cmd->callback([&] { action = [&] { cmd_perturb_sweep(g, kind, levels, checkpoints, sweep_out, sweep_svg); }; });

  auto* bench = app.add_subcommand("bench", "Penalty vs normalization throughput");
  bench->add_option("--images", bench_images)->check(CLI::PositiveNumber);
  bench->add_option("--side", bench_side)->check(CLI::PositiveNumber);
  bench->callback([&] { action = [&] { cmd_bench(g, bench_images, bench_side); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error kind=usage message=" << quote(e.what()) << '\n';
    return 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error kind=" << e.kind() << " message=" << quote(e.what()) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=" << quote(e.what()) << '\n';
  }
  return 1;
}
