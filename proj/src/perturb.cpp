#include "sdnet/perturb.hpp"

#include "sdnet/metrics.hpp"
#include "sdnet/stain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sdnet {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

// 3×3 convolution with reflect padding, applied per channel.
Image convolve3(const Image& img, const Eigen::Matrix3d& k) {
  Image out(img.height, img.width, img.channels());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            s += k(dy + 1, dx + 1) * img(reflect_index(y + dy, img.height), reflect_index(x + dx, img.width), c);
        out(y, x, c) = s;
      }
  return out;
}

}  // namespace

Image box_blur(const Image& img, int n) {
  if (n < 2 || n > 20) throw InvalidArgument("blur kernel size must lie in [2, 20]");
  const int before = n / 2;
  const int ph = img.height + n, pw = img.width + n;
  Image out(img.height, img.width, img.channels());
  Eigen::ArrayXXd integral(ph + 1, pw + 1);
  for (int c = 0; c < img.channels(); ++c) {
    integral.setZero();
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        const double v = img(reflect_index(y - before, img.height), reflect_index(x - before, img.width), c);
        integral(y + 1, x + 1) = v + integral(y, x + 1) + integral(y + 1, x) - integral(y, x);
      }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double s = integral(y + n, x + n) - integral(y, x + n) - integral(y + n, x) + integral(y, x);
        out(y, x, c) = std::clamp(s / double(n * n), 0.0, 1.0);
      }
  }
  return out;
}

Image sharpen_blend(const Image& img, double alpha, bool clip) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("sharpen alpha must lie in [0,1]");
  Eigen::Matrix3d k;
  k << -1, -1, -1, -1, 9, -1, -1, -1, -1;
  Image out = img;
  if (alpha == 0.0) return out;
  out.pixels = (1.0 - alpha) * img.pixels + alpha * convolve3(img, k).pixels;
  if (clip) out.pixels = out.pixels.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

double laplace_variance(const Image& img) {
  Image gray;
  gray.height = img.height;
  gray.width = img.width;
  gray.pixels = luminance(img);
  Eigen::Matrix3d k;
  k << 0, 1, 0, 1, -4, 1, 0, 1, 0;
  const Eigen::ArrayXd r = convolve3(gray, k).pixels.col(0);
  return (r - r.mean()).square().mean();
}

double silverman_bandwidth(const std::vector<double>& values) {
  if (values.size() < 2) throw InvalidArgument("bandwidth needs at least two values");
  std::vector<double> s = values;
  std::sort(s.begin(), s.end());
  const double n = double(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = sorted_quantile(s, 0.75) - sorted_quantile(s, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double h = 0.9 * spread * std::pow(n, -0.2);
  if (!(h > 0.0)) throw DegenerateError("all values are identical; kernel bandwidth is zero");
  return h;
}

DensityCurve kde_profile(const std::vector<double>& values, int points) {
  if (points < 3) throw InvalidArgument("kde grid needs at least 3 points");
  DensityCurve out;
  out.bandwidth = silverman_bandwidth(values);
  const double h = out.bandwidth;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it - 3.0 * h, hi = *hi_it + 3.0 * h;
  const double step = (hi - lo) / double(points - 1);
  const double norm = 1.0 / (double(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  out.grid.resize(std::size_t(points));
  out.density.resize(std::size_t(points));
  for (int i = 0; i < points; ++i) {
    const double g = lo + step * i;
    double s = 0.0;
    for (double v : values) {
      const double u = (g - v) / h;
      s += std::exp(-0.5 * u * u);
    }
    out.grid[std::size_t(i)] = g;
    out.density[std::size_t(i)] = s * norm;
  }
  double mass = 0.0;
  for (int i = 1; i < points; ++i)
    mass += 0.5 * step * (out.density[std::size_t(i)] + out.density[std::size_t(i - 1)]);
  for (double& d : out.density) d /= mass;
  return out;
}

std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Blur: return "blur";
    case PerturbationKind::Sharpen: return "sharpen";
    case PerturbationKind::StainH: return "stain-h";
    case PerturbationKind::StainE: return "stain-e";
  }
  return "?";
}

PerturbationKind parse_perturbation_kind(const std::string& s) {
  if (s == "blur") return PerturbationKind::Blur;
  if (s == "sharpen") return PerturbationKind::Sharpen;
  if (s == "stain-h" || s == "stain_h") return PerturbationKind::StainH;
  if (s == "stain-e" || s == "stain_e") return PerturbationKind::StainE;
  throw InvalidArgument("unknown perturbation kind '" + s + "'");
}

PerturbationSweep PerturbationSweep::standard(PerturbationKind kind) {
  PerturbationSweep s;
  s.kind = kind;
  switch (kind) {
    case PerturbationKind::Blur:
      s.levels.push_back(1);
      for (int n = 2; n <= 20; ++n) s.levels.push_back(n);
      break;
    case PerturbationKind::Sharpen:
      for (int i = 0; i <= 10; ++i) s.levels.push_back(i / 10.0);
      break;
    case PerturbationKind::StainH:
    case PerturbationKind::StainE:
      for (int i = 10; i >= 0; --i) s.levels.push_back(i / 10.0);
      break;
  }
  return s;
}

bool PerturbationSweep::is_identity(double level) const {
  switch (kind) {
    case PerturbationKind::Blur: return level <= 1.0;
    case PerturbationKind::Sharpen: return level == 0.0;
    case PerturbationKind::StainH:
    case PerturbationKind::StainE: return level == 1.0;
  }
  return false;
}

void PerturbationSweep::validate() const {
  if (levels.empty()) throw InvalidArgument("sweep has no levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double l = levels[i];
    switch (kind) {
      case PerturbationKind::Blur:
        if (l != std::round(l) || l < 1 || l > 20) throw InvalidArgument("blur levels must be integers in [1,20]");
        break;
      case PerturbationKind::Sharpen:
      case PerturbationKind::StainH:
      case PerturbationKind::StainE:
        if (!(l >= 0.0 && l <= 1.0)) throw InvalidArgument("sharpen/stain levels must lie in [0,1]");
        break;
    }
    if (i > 0) {
      const bool stain = kind == PerturbationKind::StainH || kind == PerturbationKind::StainE;
      if (stain ? !(l < levels[i - 1]) : !(l > levels[i - 1]))
        throw InvalidArgument("sweep levels must run from identity-most to severest");
    }
  }
}

Image apply_perturbation(const Image& img, PerturbationKind kind, double level,
                         const std::optional<StainMatrix>& stains) {
  switch (kind) {
    case PerturbationKind::Blur:
      if (level <= 1.0) return img;
      return box_blur(img, int(std::lround(level)));
    case PerturbationKind::Sharpen: return sharpen_blend(img, level);
    case PerturbationKind::StainH:
      if (level == 1.0) return img;
      return stains ? modify_intensity(img, *stains, level, 1.0) : modify_intensity(img, level, 1.0);
    case PerturbationKind::StainE:
      if (level == 1.0) return img;
      return stains ? modify_intensity(img, *stains, 1.0, level) : modify_intensity(img, 1.0, level);
  }
  return img;
}

LabeledDataset perturb_dataset(const LabeledDataset& data, PerturbationKind kind, double level,
                               const std::optional<StainMatrix>& stains) {
  LabeledDataset out = data;
  for (Eigen::Index i = 0; i < data.size(); ++i) out.set_image(i, apply_perturbation(data.image(i), kind, level, stains));
  return out;
}

SweepTable run_sweep(const std::vector<Scorer>& models, const LabeledDataset& test, const PerturbationSweep& sweep,
                     const std::optional<StainMatrix>& stains) {
  if (models.empty()) throw InvalidArgument("sweep needs at least one model");
  sweep.validate();
  SweepTable table;
  table.kind = sweep.kind;
  for (double level : sweep.levels) {
    const LabeledDataset shifted = sweep.is_identity(level) ? test : perturb_dataset(test, sweep.kind, level, stains);
    std::vector<double> accs;
    for (const auto& score : models) accs.push_back(balanced_accuracy(binarize(score(shifted)), shifted.labels));
    SweepRow row;
    row.level = level;
    row.n_seeds = int(accs.size());
    for (double a : accs) row.mean_balanced_accuracy += a;
    row.mean_balanced_accuracy /= double(accs.size());
    if (accs.size() > 1) {
      double ss = 0.0;
      for (double a : accs) ss += (a - row.mean_balanced_accuracy) * (a - row.mean_balanced_accuracy);
      row.sd = std::sqrt(ss / double(accs.size() - 1));
    }
    table.rows.push_back(row);
  }
  return table;
}

SweepTable run_sweep(const std::vector<Model<double>>& models, const LabeledDataset& test,
                     const PerturbationSweep& sweep, const std::optional<StainMatrix>& stains) {
  std::vector<Scorer> scorers;
  for (const auto& m : models)
    scorers.push_back([&m](const LabeledDataset& d) { return predict_proba(m, d); });
  return run_sweep(scorers, test, sweep, stains);
}

}  // namespace sdnet
