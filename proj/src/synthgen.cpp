#include "sdnet/synthgen.hpp"

#include "sdnet/png_io.hpp"
#include "sdnet/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace sdnet {

namespace {

double normal(Rng& rng) {
  // Box–Muller on portable uniforms.
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void shuffle(std::vector<Eigen::Index>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void CutoutSpec::validate(int image_size) const {
  if (n_cutouts < 0) throw InvalidArgument("n_cutouts must be >= 0");
  if (cutout_size < 1 || cutout_size > image_size) throw InvalidArgument("cutouts must fit inside the image");
  if (!in_unit(train_rate_neg) || !in_unit(train_rate_pos) || !in_unit(test_rate_pos) || !in_unit(test_rate_neg))
    throw InvalidArgument("cutout rates must lie in [0,1]");
  if (control && (train_rate_neg != 1.0 || train_rate_pos != 1.0))
    throw InvalidArgument("a control spec puts cutouts on every training image");
  if (long(n_cutouts) * cutout_size * cutout_size > long(image_size) * image_size)
    throw InvalidArgument("cutouts cannot fit without overlap");
  if (max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
}

void SyntheticImageSpec::validate() const {
  if (image_size < 4) throw InvalidArgument("image_size must be >= 4");
  if (!(freq_low_min > 0.0 && freq_low_min < freq_boundary && freq_boundary < freq_high_max))
    throw InvalidArgument("frequency bands must satisfy 0 < low < boundary < high");
  if (!(core_accuracy_ceiling > 0.5 && core_accuracy_ceiling <= 1.0))
    throw InvalidArgument("core_accuracy_ceiling must lie in (0.5, 1]");
  if (!(noise_sigma >= 0.0) || !(amplitude > 0.0)) throw InvalidArgument("texture amplitude/noise out of range");
}

void TissueSpec::validate() const {
  if (image_size < 8) throw InvalidArgument("tissue image_size must be >= 8");
  if (nuclei_neg < 0 || nuclei_pos < 0 || nucleus_radius <= 0) throw InvalidArgument("nucleus parameters out of range");
  if (!(e_min >= 0.0 && e_min <= e_max)) throw InvalidArgument("eosin range out of order");
  if (!(texture_amplitude >= 0.0)) throw InvalidArgument("texture amplitude must be nonnegative");
  if (!(texture_agreement >= 0.0 && texture_agreement <= 1.0)) throw InvalidArgument("texture agreement must lie in [0,1]");
}

Image apply_cutouts(const Image& img, const CutoutSpec& spec, Rng& rng) {
  spec.validate(std::min(img.height, img.width));
  Image out = img;
  const int s = spec.cutout_size;
  std::vector<TileOrigin> placed;
  for (int k = 0; k < spec.n_cutouts; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
      const int x = int(rng() % std::uint64_t(img.width - s + 1));
      const int y = int(rng() % std::uint64_t(img.height - s + 1));
      ok = std::none_of(placed.begin(), placed.end(), [&](const TileOrigin& p) {
        return x < p.x + s && p.x < x + s && y < p.y + s && p.y < y + s;
      });
      if (ok) placed.push_back({x, y});
    }
    if (!ok) throw InvalidArgument("could not place cutout " + std::to_string(k + 1) + " without overlap");
  }
  for (const auto& p : placed)
    for (int y = p.y; y < p.y + s; ++y)
      for (int x = p.x; x < p.x + s; ++x)
        for (int c = 0; c < out.channels(); ++c) out(y, x, c) = spec.fill;
  return out;
}

Image render_texture(const SyntheticImageSpec& spec, double frequency, Rng& rng) {
  const int n = spec.image_size;
  const double theta = uniform01(rng) * std::numbers::pi;
  const double phase = uniform01(rng) * 2.0 * std::numbers::pi;
  const double kx = 2.0 * std::numbers::pi * frequency * std::cos(theta) / n;
  const double ky = 2.0 * std::numbers::pi * frequency * std::sin(theta) / n;
  Image img(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = spec.background + spec.amplitude * std::sin(kx * x + ky * y + phase) + spec.noise_sigma * normal(rng);
      img(y, x) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

std::vector<Eigen::Index> stratified_pick(std::vector<Eigen::Index> pool, double rate, Rng& rng) {
  shuffle(pool, rng);
  pool.resize(std::size_t(std::lround(rate * double(pool.size()))));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data, double fraction,
                                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("validation fraction must lie in (0,1)");
  Rng rng(derive_seed(seed, 0x5B17));
  std::vector<Eigen::Index> strata[2][2];
  for (Eigen::Index i = 0; i < data.size(); ++i)
    strata[data.labels(i)][data.cutout.size() ? data.cutout(i) : 0].push_back(i);
  std::vector<bool> in_val(std::size_t(data.size()), false);
  for (auto& by_label : strata)
    for (auto& pool : by_label)
      for (auto i : stratified_pick(pool, fraction, rng)) in_val[std::size_t(i)] = true;
  std::vector<Eigen::Index> tr, va;
  for (Eigen::Index i = 0; i < data.size(); ++i) (in_val[std::size_t(i)] ? va : tr).push_back(i);
  auto train = data.subset(tr), val = data.subset(va);
  train.split = Split::Train;
  val.split = Split::Val;
  return {std::move(train), std::move(val)};
}

namespace {

LabeledDataset cutout_split(const SyntheticImageSpec& img_spec, const CutoutSpec& cut, int n, double rate_neg,
                            double rate_pos, Split split, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InvalidArgument("sample counts must be even and >= 2 for class balance");
  const int d = img_spec.image_size * img_spec.image_size;
  LabeledDataset out;
  out.split = split;
  out.shape = {img_spec.image_size, img_spec.image_size, 1};
  out.inputs.resize(n, d);
  out.labels.resize(n);
  out.cutout = Eigen::VectorXi::Zero(n);
  out.latent.resize(n);

  Rng assign(derive_seed(seed, 0xA551));
  std::vector<Eigen::Index> neg, pos;
  for (int i = 0; i < n; ++i) {
    out.labels(i) = i % 2;
    (i % 2 ? pos : neg).push_back(i);
  }
  std::vector<bool> confused(std::size_t(n), false);
  const double confusion = 1.0 - img_spec.core_accuracy_ceiling;
  for (const auto* pool : {&neg, &pos})
    for (auto i : stratified_pick(*pool, confusion, assign)) confused[std::size_t(i)] = true;
  for (auto i : stratified_pick(neg, rate_neg, assign)) out.cutout(i) = 1;
  for (auto i : stratified_pick(pos, rate_pos, assign)) out.cutout(i) = 1;

  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, std::uint64_t(i));
    const bool high = (out.labels(i) == 1) != confused[std::size_t(i)];
    const double f = high ? img_spec.freq_boundary + (img_spec.freq_high_max - img_spec.freq_boundary) * uniform01(rng)
                          : img_spec.freq_low_min + (img_spec.freq_boundary - img_spec.freq_low_min) * uniform01(rng);
    Image img = render_texture(img_spec, f, rng);
    if (out.cutout(i)) img = apply_cutouts(img, cut, rng);
    out.latent(i) = f;
    out.inputs.row(i) = img.flat();
  }
  return out;
}

}  // namespace

DatasetSplits make_cutout_dataset(const SyntheticImageSpec& img_spec, const CutoutSpec& cutout_spec, int n_train,
                                  int n_test, std::uint64_t seed, double val_fraction) {
  img_spec.validate();
  cutout_spec.validate(img_spec.image_size);
  DatasetSplits s;
  const auto pool = cutout_split(img_spec, cutout_spec, n_train, cutout_spec.train_rate_neg,
                                 cutout_spec.train_rate_pos, Split::Train, derive_seed(seed, 1));
  if (val_fraction > 0.0) {
    std::tie(s.train, s.val) = stratified_split(pool, val_fraction, derive_seed(seed, 2));
  } else {
    s.train = pool;
  }
  // The test set does not depend on the training rates, so control and
  // spurious arms built from one seed share it.
  s.test = cutout_split(img_spec, cutout_spec, n_test, cutout_spec.test_rate_neg, cutout_spec.test_rate_pos,
                        Split::Test, derive_seed(seed, 3));
  return s;
}

double core_oracle_accuracy(const LabeledDataset& data, const SyntheticImageSpec& spec) {
  if (data.latent.size() != data.size()) throw InvalidArgument("dataset carries no latent core signal");
  long correct = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    correct += int(data.latent(i) >= spec.freq_boundary) == data.labels(i);
  return double(correct) / double(data.size());
}

std::pair<LabeledDataset, LabeledDataset> make_linear_starvation_dataset(int n, double margin_strong,
                                                                         double margin_weak, double noise,
                                                                         double correlation, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InvalidArgument("n must be even and >= 2");
  if (!(correlation >= 0.5 && correlation < 1.0)) throw InvalidArgument("correlation must lie in [0.5, 1)");
  if (!(margin_strong > 0.0 && margin_weak > 0.0 && noise >= 0.0)) throw InvalidArgument("margins must be positive");
  auto build = [&](double agree_rate, Split split, std::uint64_t s) {
    LabeledDataset d;
    d.split = split;
    d.inputs.resize(n, 2);
    d.labels.resize(n);
    Rng assign(derive_seed(s, 0xC0));
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      all[std::size_t(i)] = i;
      d.labels(i) = i % 2;
    }
    std::vector<bool> agree(std::size_t(n), false);
    for (auto i : stratified_pick(all, agree_rate, assign)) agree[std::size_t(i)] = true;
    for (int i = 0; i < n; ++i) {
      Rng rng = make_rng(s, std::uint64_t(i));
      const double sign = d.labels(i) == 1 ? 1.0 : -1.0;
      const double a_sign = agree[std::size_t(i)] ? sign : -sign;
      d.inputs(i, 0) = a_sign * margin_strong * (1.0 + noise * uniform01(rng));
      d.inputs(i, 1) = sign * margin_weak * (1.0 + noise * uniform01(rng));
    }
    return d;
  };
  return {build(correlation, Split::Train, derive_seed(seed, 1)), build(0.5, Split::Test, derive_seed(seed, 2))};
}

namespace {

// Concentration maps (2 × P) for one tissue sample.
Eigen::Matrix<double, 2, Eigen::Dynamic> tissue_concentrations(const TissueSpec& spec, int label, Rng& rng) {
  const int n = spec.image_size;
  Eigen::ArrayXXd h = Eigen::ArrayXXd::Constant(n, n, spec.h_background);
  Eigen::ArrayXXd e(n, n);
  const double e0 = spec.e_min + (spec.e_max - spec.e_min) * uniform01(rng);
  const double fx = (uniform01(rng) - 0.5) * 0.4, fy = (uniform01(rng) - 0.5) * 0.4;
  const double ph = uniform01(rng) * 2.0 * std::numbers::pi;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) e(y, x) = e0 * (1.0 + 0.3 * std::sin(fx * x + fy * y + ph));

  const double mean = label == 1 ? spec.nuclei_pos : spec.nuclei_neg;
  const int count = std::max(0, int(std::lround(mean + 2.0 * (uniform01(rng) - 0.5) * 2.0)));
  const bool checker_style = (uniform01(rng) < spec.texture_agreement) == (label == 1);
  const int phase = int(rng() & 1);
  Eigen::ArrayXXd mask = Eigen::ArrayXXd::Zero(n, n);
  for (int k = 0; k < count; ++k) {
    const double cy = uniform01(rng) * n, cx = uniform01(rng) * n;
    const double r = spec.nucleus_radius * (0.8 + 0.4 * uniform01(rng));
    const double peak = 0.7 + 0.3 * uniform01(rng);
    for (int y = std::max(0, int(cy - 2 * r)); y < std::min(n, int(cy + 2 * r) + 1); ++y)
      for (int x = std::max(0, int(cx - 2 * r)); x < std::min(n, int(cx + 2 * r) + 1); ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
        mask(y, x) = std::max(mask(y, x), peak * std::exp(-d2 * d2));
      }
  }
  // Background absorbs the nuclear stain so mean H and E carry no label.
  const double mask_mean = mask.mean();
  const double h_shift = 0.1 - mask_mean;
  const double e_scale = 1.0 / (1.0 - 0.5 * mask_mean);
  Eigen::Matrix<double, 2, Eigen::Dynamic> c(2, Eigen::Index(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const int parity = checker_style ? x + y + phase : x + phase;
      const double texture = spec.texture_amplitude * ((parity & 1) ? 1.0 : -1.0);
      const double hv = h(y, x) + h_shift + mask(y, x) + texture + spec.noise_sigma * normal(rng);
      const double ev = e_scale * e(y, x) * (1.0 - 0.5 * mask(y, x)) + spec.noise_sigma * normal(rng);
      c(0, Eigen::Index(y) * n + x) = std::max(0.0, hv);
      c(1, Eigen::Index(y) * n + x) = std::max(0.0, ev);
    }
  return c;
}

}  // namespace

LabeledDataset make_tissue_dataset(const TissueSpec& spec, int n, Split split, std::uint64_t seed,
                                   const StainMatrix& stains, const Eigen::Vector2d& intensity) {
  spec.validate();
  if (n < 2 || n % 2 != 0) throw InvalidArgument("sample counts must be even and >= 2 for class balance");
  const int side = spec.image_size;
  LabeledDataset out;
  out.split = split;
  out.shape = {side, side, 3};
  out.inputs.resize(n, out.shape.dim());
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, std::uint64_t(i));
    out.labels(i) = i % 2;
    Eigen::Matrix<double, 2, Eigen::Dynamic> c = tissue_concentrations(spec, out.labels(i), rng);
    c.row(0) *= intensity(0);
    c.row(1) *= intensity(1);
    out.inputs.row(i) = od_to_rgb<double>(recombine_od(stains, c), side, side).flat();
  }
  return out;
}

void export_dataset(const DatasetSplits& splits, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory + ": " + ec.message());
  std::ofstream manifest(fs::path(directory) / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest in " + directory);
  manifest << "path,label,has_cutouts,split\n";
  for (const auto* d : {&splits.train, &splits.val, &splits.test}) {
    if (d->size() == 0) continue;
    const std::string tag = to_string(d->split);
    fs::create_directories(fs::path(directory) / tag, ec);
    for (Eigen::Index i = 0; i < d->size(); ++i) {
      const std::string rel = tag + "/" + std::to_string(i) + ".png";
      write_png(quantize(d->image(i)), (fs::path(directory) / rel).string());
      manifest << rel << ',' << d->labels(i) << ',' << (d->cutout.size() ? d->cutout(i) : 0) << ',' << tag << '\n';
    }
  }
}

}  // namespace sdnet
