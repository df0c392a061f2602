#pragma once

#include "sdnet/errors.hpp"
#include "sdnet/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace sdnet {

enum class SDVariant { Off, Eq1, Eq2 };

/// Spectral decoupling: an L2 penalty on logits added to cross-entropy.
///
/// Eq1 pulls every logit toward zero with one coefficient. Eq2 selects a
/// (lambda, gamma) pair by the sample's ground-truth class and pulls both of
/// that sample's logits toward gamma.
struct SDConfig {
  SDVariant variant = SDVariant::Off;
  double lambda = 0.0;
  double lambda_neg = 0.0;
  double gamma_neg = 0.0;
  double lambda_pos = 0.0;
  double gamma_pos = 0.0;

  static SDConfig off() { return {}; }
  static SDConfig eq1(double lambda) {
    SDConfig c;
    c.variant = SDVariant::Eq1;
    c.lambda = lambda;
    return c;
  }
  static SDConfig eq2(double lambda_neg, double gamma_neg, double lambda_pos, double gamma_pos) {
    SDConfig c;
    c.variant = SDVariant::Eq2;
    c.lambda_neg = lambda_neg;
    c.gamma_neg = gamma_neg;
    c.lambda_pos = lambda_pos;
    c.gamma_pos = gamma_pos;
    return c;
  }

  bool active() const { return variant != SDVariant::Off; }

  void validate() const {
    auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
    if (variant == SDVariant::Eq1 && bad(lambda)) throw InvalidArgument("sd lambda must be finite and >= 0");
    if (variant == SDVariant::Eq2) {
      if (bad(lambda_neg) || bad(lambda_pos)) throw InvalidArgument("sd lambda_neg/lambda_pos must be finite and >= 0");
      if (!std::isfinite(gamma_neg) || !std::isfinite(gamma_pos)) throw InvalidArgument("sd gamma must be finite");
    }
  }

  friend bool operator==(const SDConfig&, const SDConfig&) = default;
};

std::string to_string(const SDConfig& cfg);

namespace detail {

template <typename Derived>
void check_logits(const Eigen::MatrixBase<Derived>& logits) {
  if (logits.cols() != 2) throw InvalidArgument("logits must have exactly 2 columns");
  if (logits.rows() == 0) throw InvalidArgument("empty logit batch");
}

template <typename Derived, typename LabelDerived>
void check_labels(const Eigen::MatrixBase<Derived>& logits, const Eigen::MatrixBase<LabelDerived>& labels) {
  if (labels.size() != logits.rows()) throw InvalidArgument("labels and logits disagree on batch size");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 0 && labels(i) != 1) throw InvalidArgument("labels must be 0 or 1");
}

}  // namespace detail

/// Row-wise softmax of an N×2 logit matrix.
template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  detail::check_logits(logits);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> p(logits.rows(), 2);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = std::max(logits(i, 0), logits(i, 1));
    const Scalar e0 = std::exp(logits(i, 0) - m), e1 = std::exp(logits(i, 1) - m);
    p(i, 0) = e0 / (e0 + e1);
    p(i, 1) = e1 / (e0 + e1);
  }
  return p;
}

/// Mean negative log-likelihood of the true class.
template <typename Derived, typename LabelDerived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                       const Eigen::MatrixBase<LabelDerived>& labels) {
  using Scalar = typename Derived::Scalar;
  detail::check_logits(logits);
  detail::check_labels(logits, labels);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = std::max(logits(i, 0), logits(i, 1));
    const Scalar lse = m + std::log(std::exp(logits(i, 0) - m) + std::exp(logits(i, 1) - m));
    total += lse - logits(i, labels(i));
  }
  return total / Scalar(logits.rows());
}

/// (λ/2)·mean(ŷ²) over every logit entry. Accepts any logit layout,
/// including a single-column batch.
template <typename Derived>
typename Derived::Scalar sd_penalty_eq1(const Eigen::MatrixBase<Derived>& logits, double lambda) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw InvalidArgument("empty logit batch");
  if (!std::isfinite(lambda) || lambda < 0.0) throw InvalidArgument("sd lambda must be finite and >= 0");
  return Scalar(lambda / 2.0) * logits.squaredNorm() / Scalar(logits.size());
}

/// Per-sample (λ_y/2)·mean_c (ŷ_c − γ_y)², averaged over the batch.
template <typename Derived, typename LabelDerived>
typename Derived::Scalar sd_penalty_eq2(const Eigen::MatrixBase<Derived>& logits,
                                        const Eigen::MatrixBase<LabelDerived>& labels, const SDConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  if (cfg.variant != SDVariant::Eq2) throw InvalidArgument("sd_penalty_eq2 needs an eq2 config");
  cfg.validate();
  detail::check_logits(logits);
  detail::check_labels(logits, labels);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const bool pos = labels(i) == 1;
    const Scalar lambda = Scalar(pos ? cfg.lambda_pos : cfg.lambda_neg);
    const Scalar gamma = Scalar(pos ? cfg.gamma_pos : cfg.gamma_neg);
    const Scalar d0 = logits(i, 0) - gamma, d1 = logits(i, 1) - gamma;
    total += lambda / Scalar(2) * (d0 * d0 + d1 * d1) / Scalar(2);
  }
  return total / Scalar(logits.rows());
}

/// Penalty selected by `cfg.variant`; zero when off.
template <typename Derived, typename LabelDerived>
typename Derived::Scalar sd_penalty(const Eigen::MatrixBase<Derived>& logits,
                                    const Eigen::MatrixBase<LabelDerived>& labels, const SDConfig& cfg) {
  switch (cfg.variant) {
    case SDVariant::Eq1: return sd_penalty_eq1(logits, cfg.lambda);
    case SDVariant::Eq2: return sd_penalty_eq2(logits, labels, cfg);
    case SDVariant::Off: break;
  }
  return 0;
}

/// d(CE + SD)/d(logits), shaped N×2.
template <typename Derived, typename LabelDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> logit_gradient(
    const Eigen::MatrixBase<Derived>& logits, const Eigen::MatrixBase<LabelDerived>& labels, const SDConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = Scalar(logits.rows());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g = softmax(logits);
  for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels(i)) -= Scalar(1);
  g /= n;
  if (cfg.variant == SDVariant::Eq1) {
    g += Scalar(cfg.lambda) * logits / (Scalar(2) * n);
  } else if (cfg.variant == SDVariant::Eq2) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const bool pos = labels(i) == 1;
      const Scalar lambda = Scalar(pos ? cfg.lambda_pos : cfg.lambda_neg);
      const Scalar gamma = Scalar(pos ? cfg.gamma_pos : cfg.gamma_neg);
      g.row(i) += lambda * (logits.row(i).array() - gamma).matrix() / (Scalar(2) * n);
    }
  }
  return g;
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  Scalar cross_entropy = 0;
  Scalar penalty = 0;
  Model<Scalar> grad;
};

/// CE + SD penalty and its exact gradient with respect to every parameter.
template <typename Scalar, typename Derived, typename LabelDerived>
LossAndGrad<Scalar> loss_and_grad(const Model<Scalar>& model, const Eigen::MatrixBase<Derived>& batch,
                                  const Eigen::MatrixBase<LabelDerived>& labels, const SDConfig& sd) {
  sd.validate();
  const auto pass = forward_pass(model, batch);
  detail::check_labels(pass.logits, labels);

  LossAndGrad<Scalar> out;
  out.cross_entropy = cross_entropy(pass.logits, labels);
  out.penalty = sd_penalty(pass.logits, labels, sd);
  out.loss = out.cross_entropy + out.penalty;
  if (!std::isfinite(double(out.loss)))
    throw TrainingError("non-finite loss (ce=" + std::to_string(double(out.cross_entropy)) +
                        ", penalty=" + std::to_string(double(out.penalty)) + ")");

  const auto dz = logit_gradient(pass.logits, labels, sd);
  out.grad = model.zeros_like();
  out.grad.b2 = dz.colwise().sum().transpose();
  if (model.kind == ModelKind::Linear) {
    out.grad.w2.noalias() = dz.transpose() * batch;
  } else {
    out.grad.w2.noalias() = dz.transpose() * pass.hidden;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dh = dz * model.w2;
    dh = (pass.hidden.array() > Scalar(0)).select(dh, Scalar(0));
    out.grad.w1.noalias() = dh.transpose() * batch;
    out.grad.b1 = dh.colwise().sum().transpose();
  }
  return out;
}

/// Softmax probability of the positive class for every row.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> predict_proba(const Model<Scalar>& model,
                                                      const Eigen::MatrixBase<Derived>& batch) {
  return softmax(forward(model, batch)).col(1);
}

}  // namespace sdnet
