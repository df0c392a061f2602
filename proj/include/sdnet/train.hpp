#pragma once

#include "sdnet/loss.hpp"
#include "sdnet/model.hpp"
#include "sdnet/raster.hpp"
#include "sdnet/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace sdnet {

enum class Split { Train, Val, Test };
std::string to_string(Split s);

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  bool empty() const { return height == 0; }
  Eigen::Index dim() const { return Eigen::Index(height) * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Rows of `inputs` are samples; when `shape` is set each row is a flattened
/// pixel-interleaved image. `cutout` flags which samples carry the
/// synthetic spurious feature and `latent` holds the generator's core-signal
/// value per sample (both empty when not applicable).
struct LabeledDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXi labels;
  Eigen::VectorXi cutout;
  Eigen::VectorXd latent;
  Split split = Split::Train;
  ImageShape shape;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }

  void validate() const;
  Image image(Eigen::Index i) const;
  void set_image(Eigen::Index i, const Image& img);
  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const;
  Eigen::Index count(int label) const;
};

enum class LrSchedule { Cosine, Constant };

struct TrainConfig {
  int epochs = 30;
  double base_lr = 0.05;
  int batch_size = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  LrSchedule schedule = LrSchedule::Cosine;

  /// Rejects invalid values and the forbidden weight-decay + SD coupling.
  void validate(const SDConfig& sd) const;
};

/// Learning rate rule used for the full-size networks: 0.005·batch/512.
inline double reference_learning_rate(int batch_size) { return 0.005 * batch_size / 512.0; }

/// base·½(1 + cos(π·step/total_steps)).
double cosine_lr(double base_lr, long step, long total_steps);

/// In-place per-batch augmentation; rows are flattened images.
using Augmenter = std::function<void(Eigen::Ref<Eigen::MatrixXd> batch, Rng& rng)>;

/// Random reflect-padded crop of up to `max_shift` pixels plus random
/// horizontal and vertical flips.
Augmenter crop_flip_augmenter(ImageShape shape, int max_shift = 2);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;  // learning rate of the epoch's first step
  double train_loss = 0.0;
  double val_metric = 0.0;  // NaN without a validation set
};

struct TrainOptions {
  const LabeledDataset* validation = nullptr;
  Augmenter augment;
  /// Trains on inputs minus the training mean (applied after augmentation)
  /// and folds that mean into the returned model, which takes raw inputs.
  /// Parameter traces are recorded in the centered coordinates.
  bool center_inputs = false;
  /// Records every parameter vector after each epoch (determinism checks).
  bool keep_parameter_trace = false;
};

struct TrainResult {
  Model<double> model;
  std::vector<EpochRecord> trace;
  std::vector<Eigen::VectorXd> parameter_trace;
};

/// Mini-batch SGD without momentum on CE + SD penalty.
/// Weight decay, when set, adds weight_decay·w to every parameter gradient.
TrainResult train(Model<double> model, const LabeledDataset& data, const TrainConfig& cfg, const SDConfig& sd,
                  const TrainOptions& options = {});

Eigen::VectorXd predict_proba(const Model<double>& model, const LabeledDataset& data);

void save_checkpoint(const Model<double>& model, std::ostream& os);
Model<double> load_checkpoint(std::istream& is);
void save_checkpoint(const Model<double>& model, const std::string& path);
Model<double> load_checkpoint(const std::string& path);

void write_trace_csv(const std::vector<EpochRecord>& trace, std::ostream& os);

}  // namespace sdnet
