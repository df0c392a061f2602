#pragma once

#include "sdnet/model.hpp"
#include "sdnet/raster.hpp"
#include "sdnet/stain.hpp"
#include "sdnet/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sdnet {

/// Reflect-101 index folding (…2 1 | 0 1 2 … n-1 | n-2 …), valid for any offset.
int reflect_index(int i, int n);

/// n×n mean filter with reflect padding. For even n the window spans
/// [y - n/2, y + n/2 - 1]. Requires 2 <= n <= 20.
Image box_blur(const Image& img, int n);

/// 3×3 sharpening kernel (centre 9, neighbours -1) blended with the original:
/// (1-α)·x + α·x_sharp, clipped to [0,1] unless `clip` is false.
Image sharpen_blend(const Image& img, double alpha, bool clip = true);

/// Variance of the 4-neighbour Laplacian of the luminance.
double laplace_variance(const Image& img);

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Silverman rule-of-thumb bandwidth: 0.9·min(sd, IQR/1.34)·n^(-1/5).
double silverman_bandwidth(const std::vector<double>& values);

/// Gaussian KDE evaluated on `points` evenly spaced values over
/// [min - 3h, max + 3h], rescaled to unit trapezoid mass over that grid.
DensityCurve kde_profile(const std::vector<double>& values, int points = 512);

enum class PerturbationKind { Blur, Sharpen, StainH, StainE };

std::string to_string(PerturbationKind k);
PerturbationKind parse_perturbation_kind(const std::string& s);

/// Ordered magnitudes, identity-most first.
struct PerturbationSweep {
  PerturbationKind kind = PerturbationKind::Blur;
  std::vector<double> levels;

  /// Blur 1 (identity), 2..20; sharpen 0, 0.1, …, 1; stain 1.0, 0.9, …, 0.0.
  static PerturbationSweep standard(PerturbationKind kind);
  bool is_identity(double level) const;
  void validate() const;
};

/// One perturbation at one level; identity levels return the input untouched.
/// Stain kinds use `stains` when given, otherwise each image's own estimate.
Image apply_perturbation(const Image& img, PerturbationKind kind, double level,
                         const std::optional<StainMatrix>& stains = std::nullopt);

/// Applies a level to every image row of a dataset.
LabeledDataset perturb_dataset(const LabeledDataset& data, PerturbationKind kind, double level,
                               const std::optional<StainMatrix>& stains = std::nullopt);

struct SweepRow {
  double level = 0.0;
  double mean_balanced_accuracy = 0.0;
  double sd = 0.0;
  int n_seeds = 0;
};

struct SweepTable {
  PerturbationKind kind = PerturbationKind::Blur;
  std::vector<SweepRow> rows;
};

/// Anything that maps a dataset to positive-class probabilities.
using Scorer = std::function<Eigen::VectorXd(const LabeledDataset&)>;

/// Mean and sample SD of balanced accuracy across one model per seed.
SweepTable run_sweep(const std::vector<Scorer>& models, const LabeledDataset& test, const PerturbationSweep& sweep,
                     const std::optional<StainMatrix>& stains = std::nullopt);
SweepTable run_sweep(const std::vector<Model<double>>& models, const LabeledDataset& test,
                     const PerturbationSweep& sweep, const std::optional<StainMatrix>& stains = std::nullopt);

}  // namespace sdnet
