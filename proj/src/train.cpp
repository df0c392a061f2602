#include "sdnet/train.hpp"

#include "sdnet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace sdnet {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::string to_string(const SDConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(6);
  switch (cfg.variant) {
    case SDVariant::Off: os << "off"; break;
    case SDVariant::Eq1: os << "eq1(lambda=" << cfg.lambda << ")"; break;
    case SDVariant::Eq2:
      os << "eq2(lambda_neg=" << cfg.lambda_neg << ",gamma_neg=" << cfg.gamma_neg << ",lambda_pos=" << cfg.lambda_pos
         << ",gamma_pos=" << cfg.gamma_pos << ")";
      break;
  }
  return os.str();
}

void LabeledDataset::validate() const {
  if (inputs.rows() == 0) throw InvalidArgument("dataset is empty");
  if (labels.size() != inputs.rows()) throw InvalidArgument("dataset labels and inputs differ in length");
  if (cutout.size() != 0 && cutout.size() != inputs.rows()) throw InvalidArgument("cutout flags have wrong length");
  if (latent.size() != 0 && latent.size() != inputs.rows()) throw InvalidArgument("latent values have wrong length");
  if (!inputs.allFinite()) throw InvalidArgument("dataset contains non-finite inputs");
  if (((labels.array() != 0) && (labels.array() != 1)).any()) throw InvalidArgument("labels must be 0 or 1");
  if (!shape.empty() && shape.dim() != inputs.cols()) throw InvalidArgument("image shape does not match input width");
}

Image LabeledDataset::image(Eigen::Index i) const {
  if (shape.empty()) throw InvalidArgument("dataset rows are not images");
  return unflatten(inputs.row(i), shape.height, shape.width, shape.channels);
}

void LabeledDataset::set_image(Eigen::Index i, const Image& img) {
  if (img.height != shape.height || img.width != shape.width || img.channels() != shape.channels)
    throw InvalidArgument("image does not match dataset shape");
  inputs.row(i) = img.flat();
}

LabeledDataset LabeledDataset::subset(const std::vector<Eigen::Index>& rows) const {
  LabeledDataset out;
  out.split = split;
  out.shape = shape;
  out.inputs.resize(Eigen::Index(rows.size()), inputs.cols());
  out.labels.resize(Eigen::Index(rows.size()));
  if (cutout.size()) out.cutout.resize(Eigen::Index(rows.size()));
  if (latent.size()) out.latent.resize(Eigen::Index(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = Eigen::Index(k);
    out.inputs.row(i) = inputs.row(rows[k]);
    out.labels(i) = labels(rows[k]);
    if (cutout.size()) out.cutout(i) = cutout(rows[k]);
    if (latent.size()) out.latent(i) = latent(rows[k]);
  }
  return out;
}

Eigen::Index LabeledDataset::count(int label) const { return (labels.array() == label).count(); }

void TrainConfig::validate(const SDConfig& sd) const {
  sd.validate();
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw InvalidArgument("base_lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw InvalidArgument("weight_decay must be >= 0");
  if (sd.active() && weight_decay != 0.0)
    throw InvalidArgument("weight decay must be disabled when spectral decoupling is active");
}

double cosine_lr(double base_lr, long step, long total_steps) {
  if (total_steps <= 0) return base_lr;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

Augmenter crop_flip_augmenter(ImageShape shape, int max_shift) {
  if (shape.empty()) throw InvalidArgument("augmentation needs an image shape");
  if (max_shift < 0 || max_shift >= std::min(shape.height, shape.width))
    throw InvalidArgument("crop shift must be smaller than the image");
  return [shape, max_shift](Eigen::Ref<Eigen::MatrixXd> batch, Rng& rng) {
    const int h = shape.height, w = shape.width, c = shape.channels;
    auto reflect = [](int i, int n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
      return i;
    };
    Eigen::RowVectorXd src;
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
      const int span = 2 * max_shift + 1;
      const int dy = int(rng() % std::uint64_t(span)) - max_shift;
      const int dx = int(rng() % std::uint64_t(span)) - max_shift;
      const bool flip_h = rng() & 1, flip_v = rng() & 1;
      src = batch.row(r);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          int sy = reflect(y + dy, h), sx = reflect(x + dx, w);
          if (flip_v) sy = h - 1 - sy;
          if (flip_h) sx = w - 1 - sx;
          for (int k = 0; k < c; ++k) batch(r, (Eigen::Index(y) * w + x) * c + k) = src((Eigen::Index(sy) * w + sx) * c + k);
        }
    }
  };
}

TrainResult train(Model<double> model, const LabeledDataset& data, const TrainConfig& cfg, const SDConfig& sd,
                  const TrainOptions& options) {
  cfg.validate(sd);
  data.validate();
  if (data.dim() != model.input_dim()) throw InvalidArgument("dataset width does not match model input_dim");
  if (!model.all_finite()) throw InvalidArgument("model has non-finite parameters");

  const Eigen::Index n = data.size();
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch_size, n);
  const long steps_per_epoch = long((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * cfg.epochs;

  Rng rng(derive_seed(cfg.seed, 0x7EA1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Eigen::RowVectorXd shift;
  if (options.center_inputs) shift = data.inputs.colwise().mean();

  TrainResult result;
  Eigen::MatrixXd xb;
  Eigen::VectorXi yb;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = cfg.schedule == LrSchedule::Cosine ? cosine_lr(cfg.base_lr, step, total_steps) : cfg.base_lr;
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch, ++step) {
      const Eigen::Index len = std::min(batch, n - start);
      xb.resize(len, data.dim());
      yb.resize(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.row(k) = data.inputs.row(order[std::size_t(start + k)]);
        yb(k) = data.labels(order[std::size_t(start + k)]);
      }
      if (options.augment) options.augment(xb, rng);
      if (options.center_inputs) xb.rowwise() -= shift;

      auto lg = loss_and_grad(model, xb, yb, sd);
      loss_sum += lg.loss * double(len);
      const double lr = cfg.schedule == LrSchedule::Cosine ? cosine_lr(cfg.base_lr, step, total_steps) : cfg.base_lr;
      const double wd = cfg.weight_decay;
      model.w1 -= lr * (lg.grad.w1 + wd * model.w1);
      model.b1 -= lr * (lg.grad.b1 + wd * model.b1);
      model.w2 -= lr * (lg.grad.w2 + wd * model.w2);
      model.b2 -= lr * (lg.grad.b2 + wd * model.b2);
    }
    if (!model.all_finite())
      throw TrainingError("parameters became non-finite in epoch " + std::to_string(epoch + 1));
    rec.train_loss = loss_sum / double(n);
    rec.val_metric = std::numeric_limits<double>::quiet_NaN();
    if (options.validation) {
      const auto p = options.center_inputs ? predict_proba(fold_input_shift(model, shift), *options.validation)
                                           : predict_proba(model, *options.validation);
      rec.val_metric = balanced_accuracy(binarize(p), options.validation->labels);
    }
    result.trace.push_back(rec);
    if (options.keep_parameter_trace) result.parameter_trace.push_back(model.flatten());
  }
  result.model = options.center_inputs ? fold_input_shift(std::move(model), shift) : std::move(model);
  return result;
}

Eigen::VectorXd predict_proba(const Model<double>& model, const LabeledDataset& data) {
  return predict_proba(model, data.inputs);
}

void save_checkpoint(const Model<double>& model, std::ostream& os) {
  os << "sdnet-checkpoint 1\n";
  os << "kind " << to_string(model.kind) << '\n';
  os << std::setprecision(17);
  model.for_each([&](const char* name, const auto& a) {
    os << name << ' ' << a.rows() << ' ' << a.cols() << '\n';
    for (Eigen::Index i = 0; i < a.size(); ++i) os << a.data()[i] << (i + 1 == a.size() ? "" : " ");
    os << '\n';
  });
}

Model<double> load_checkpoint(std::istream& is) {
  std::string magic, key, kind;
  int version = 0;
  if (!(is >> magic >> version) || magic != "sdnet-checkpoint" || version != 1)
    throw IoError("not an sdnet checkpoint");
  if (!(is >> key >> kind) || key != "kind") throw IoError("checkpoint is missing its kind line");
  Model<double> m;
  if (kind == "linear") m.kind = ModelKind::Linear;
  else if (kind == "one_hidden") m.kind = ModelKind::OneHidden;
  else throw IoError("unknown model kind '" + kind + "'");
  m.for_each([&](const char* name, auto& a) {
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> got >> rows >> cols) || got != name || rows < 0 || cols < 0)
      throw IoError(std::string("checkpoint array header for ") + name + " is malformed");
    a.resize(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (!(is >> a.data()[i])) throw IoError(std::string("checkpoint array ") + name + " is truncated");
  });
  if (m.output_dim() != 2 || !m.all_finite()) throw IoError("checkpoint holds an invalid model");
  if (m.kind == ModelKind::OneHidden && (m.w1.rows() != m.w2.cols() || m.b1.size() != m.w1.rows()))
    throw IoError("checkpoint layer shapes are inconsistent");
  return m;
}

void save_checkpoint(const Model<double>& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  save_checkpoint(model, os);
}

Model<double> load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return load_checkpoint(is);
}

void write_trace_csv(const std::vector<EpochRecord>& trace, std::ostream& os) {
  os << "epoch,lr,train_loss,val_metric\n" << std::setprecision(10);
  for (const auto& r : trace) os << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_metric << '\n';
}

}  // namespace sdnet
