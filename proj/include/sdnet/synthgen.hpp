#pragma once

#include "sdnet/raster.hpp"
#include "sdnet/rng.hpp"
#include "sdnet/stain.hpp"
#include "sdnet/train.hpp"

#include <cstdint>
#include <string>

namespace sdnet {

/// Square patches that act as the spurious feature. Training rates set the
/// fraction of each class that carries patches; the test rates reverse the
/// correlation. A control spec puts patches on every training image.
struct CutoutSpec {
  int n_cutouts = 16;
  int cutout_size = 4;
  double fill = 0.5;
  double train_rate_neg = 0.25;
  double train_rate_pos = 0.025;
  double test_rate_pos = 1.0;
  double test_rate_neg = 0.0;
  bool control = false;
  int max_attempts = 1000;

  static CutoutSpec control_spec() {
    CutoutSpec s;
    s.control = true;
    s.train_rate_neg = s.train_rate_pos = 1.0;
    return s;
  }
  void validate(int image_size) const;
};

/// Grayscale oriented sinusoid texture whose spatial frequency carries the
/// class: negatives draw from [freq_low_min, boundary), positives from
/// [boundary, freq_high_max]. A fixed fraction (1 - core_accuracy_ceiling)
/// of each class draws from the other class's band, so a rule that knows the
/// true frequency scores exactly the ceiling.
struct SyntheticImageSpec {
  int image_size = 32;
  double background = 0.3;
  double amplitude = 0.25;
  double noise_sigma = 0.03;
  double freq_low_min = 2.0;     // cycles per image
  double freq_boundary = 5.0;
  double freq_high_max = 8.0;
  double core_accuracy_ceiling = 0.95;

  void validate() const;
};

/// Sets `n_cutouts` non-overlapping squares to the fill value by rejection
/// sampling. Throws InvalidArgument when a square cannot be placed within
/// `max_attempts` draws.
Image apply_cutouts(const Image& img, const CutoutSpec& spec, Rng& rng);

/// Renders one texture image with the given frequency.
Image render_texture(const SyntheticImageSpec& spec, double frequency, Rng& rng);

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Stratified row selection: exactly round(rate·size) members of `pool`
/// chosen by a seeded shuffle.
std::vector<Eigen::Index> stratified_pick(std::vector<Eigen::Index> pool, double rate, Rng& rng);

/// Splits a dataset into (train, val), holding out round(fraction·size) of each
/// (label, cutout) stratum for validation.
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data, double fraction,
                                                           std::uint64_t seed);

/// Builds the cutout benchmark. Training and validation come from one
/// balanced pool of n_train images with stratified cutout counts; the test
/// set carries cutouts on positives only (per the test rates). `latent` holds
/// each image's texture frequency.
DatasetSplits make_cutout_dataset(const SyntheticImageSpec& img_spec, const CutoutSpec& cutout_spec, int n_train,
                                  int n_test, std::uint64_t seed, double val_fraction = 0.1);

/// Accuracy of thresholding the true texture frequency at the class boundary.
double core_oracle_accuracy(const LabeledDataset& data, const SyntheticImageSpec& spec);

/// Two-feature problem: column 0 (A) agrees with the label for a
/// `correlation` fraction of training rows at a large margin, column 1 (B)
/// always agrees at a small margin. In the test set A agrees for exactly half.
std::pair<LabeledDataset, LabeledDataset> make_linear_starvation_dataset(int n, double margin_strong,
                                                                         double margin_weak, double noise,
                                                                         double correlation, std::uint64_t seed);

/// Synthetic H&E tissue with two class cues. Positives carry more nuclei, a
/// coarse cue that survives blur. A fine haematoxylin texture (checkerboard
/// for the positive style, vertical stripes for the negative style, random
/// phase) is destroyed by blur; it matches the label for a `texture_agreement`
/// fraction of samples.
struct TissueSpec {
  int image_size = 32;
  double nuclei_neg = 4.0;       // mean nucleus count
  double nuclei_pos = 6.0;
  double nucleus_radius = 2.2;
  double texture_amplitude = 0.03;  // haematoxylin amplitude of the period-2 texture
  double texture_agreement = 0.9;
  double h_background = 0.08;
  double e_min = 0.25;
  double e_max = 0.6;
  double noise_sigma = 0.02;

  void validate() const;
};

/// Deterministic per-sample concentration maps, rendered with `stains` after
/// scaling H and E by `intensity`.
LabeledDataset make_tissue_dataset(const TissueSpec& spec, int n, Split split, std::uint64_t seed,
                                   const StainMatrix& stains, const Eigen::Vector2d& intensity = {1.0, 1.0});

/// Exports images as 8-bit PNGs plus manifest.csv (path, label, has_cutouts, split).
void export_dataset(const DatasetSplits& splits, const std::string& directory);

}  // namespace sdnet
