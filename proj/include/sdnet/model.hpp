#pragma once

#include "sdnet/errors.hpp"
#include "sdnet/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace sdnet {

enum class ModelKind { Linear, OneHidden };

inline std::string to_string(ModelKind k) { return k == ModelKind::Linear ? "linear" : "one_hidden"; }

/// Two-logit classifier: either a linear head, or one ReLU hidden layer
/// followed by a linear head.
///
/// Rows of the input batch are samples. For the linear kind the hidden
/// parameters are empty and `w2` maps inputs straight to logits.
///
/// The same type doubles as the gradient container returned by
/// loss_and_grad(), with every array shaped like the parameter it belongs to.
template <typename Scalar>
struct Model {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr int kOutputs = 2;

  ModelKind kind = ModelKind::Linear;
  Matrix w1;  // hidden × input
  Vector b1;  // hidden
  Matrix w2;  // 2 × (hidden or input)
  Vector b2;  // 2

  Eigen::Index input_dim() const { return kind == ModelKind::Linear ? w2.cols() : w1.cols(); }
  Eigen::Index hidden_dim() const { return kind == ModelKind::Linear ? 0 : w1.rows(); }
  Eigen::Index output_dim() const { return w2.rows(); }

  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  static Model zeros(ModelKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim) {
    if (input_dim <= 0) throw InvalidArgument("model input_dim must be positive");
    if ((kind == ModelKind::OneHidden) != (hidden_dim > 0))
      throw InvalidArgument("hidden_dim must be > 0 exactly when the model has a hidden layer");
    Model m;
    m.kind = kind;
    const Eigen::Index head_in = kind == ModelKind::Linear ? input_dim : hidden_dim;
    if (kind == ModelKind::OneHidden) {
      m.w1 = Matrix::Zero(hidden_dim, input_dim);
      m.b1 = Vector::Zero(hidden_dim);
    }
    m.w2 = Matrix::Zero(kOutputs, head_in);
    m.b2 = Vector::Zero(kOutputs);
    return m;
  }

  /// Zero-filled gradient buffer with this model's shapes.
  Model zeros_like() const {
    Model g;
    g.kind = kind;
    g.w1 = Matrix::Zero(w1.rows(), w1.cols());
    g.b1 = Vector::Zero(b1.size());
    g.w2 = Matrix::Zero(w2.rows(), w2.cols());
    g.b2 = Vector::Zero(b2.size());
    return g;
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }

  /// Visits (name, array) for every parameter array in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }

  /// Parameters concatenated in for_each order, column-major within each array.
  Vector flatten() const {
    Vector out(parameter_count());
    Eigen::Index at = 0;
    for_each([&](const char*, const auto& a) {
      out.segment(at, a.size()) = Eigen::Map<const Vector>(a.data(), a.size());
      at += a.size();
    });
    return out;
  }

  void assign_flat(const Vector& flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("flat parameter vector has wrong length");
    Eigen::Index at = 0;
    for_each([&](const char*, auto& a) {
      Eigen::Map<Vector>(a.data(), a.size()) = flat.segment(at, a.size());
      at += a.size();
    });
  }

  template <typename To>
  Model<To> cast() const {
    Model<To> m;
    m.kind = kind;
    m.w1 = w1.template cast<To>();
    m.b1 = b1.template cast<To>();
    m.w2 = w2.template cast<To>();
    m.b2 = b2.template cast<To>();
    return m;
  }
};

/// Uniform initialization in ±sqrt(1/fan_in) for weights and biases of each layer.
template <typename Scalar = double>
Model<Scalar> init_model(ModelKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed) {
  auto m = Model<Scalar>::zeros(kind, input_dim, hidden_dim);
  Rng rng(derive_seed(seed, 0x1A17));
  auto fill = [&](auto& a, Eigen::Index fan_in) {
    const double bound = std::sqrt(1.0 / double(fan_in));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = Scalar((2.0 * uniform01(rng) - 1.0) * bound);
  };
  if (kind == ModelKind::OneHidden) {
    fill(m.w1, input_dim);
    fill(m.b1, input_dim);
  }
  fill(m.w2, m.w2.cols());
  fill(m.b2, m.w2.cols());
  return m;
}

/// Rewrites a model trained on `x - shift` so it accepts raw `x`: the shift
/// moves into the first layer's bias.
template <typename Scalar, typename Derived>
Model<Scalar> fold_input_shift(Model<Scalar> model, const Eigen::MatrixBase<Derived>& shift) {
  if (shift.size() != model.input_dim()) throw InvalidArgument("input shift length does not match the model");
  const auto col = shift.derived().template cast<Scalar>().reshaped();
  if (model.kind == ModelKind::Linear) {
    model.b2 -= model.w2 * col;
  } else {
    model.b1 -= model.w1 * col;
  }
  return model;
}

/// Cached activations of one forward pass.
template <typename Scalar>
struct ForwardPass {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hidden;  // N × hidden, post-ReLU (empty for linear)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> logits;  // N × 2
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_pass(const Model<Scalar>& model, const Eigen::MatrixBase<Derived>& batch) {
  if (batch.cols() != model.input_dim())
    throw InvalidArgument("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                          std::to_string(model.input_dim()));
  ForwardPass<Scalar> out;
  if (model.kind == ModelKind::Linear) {
    out.logits = batch * model.w2.transpose();
  } else {
    out.hidden = batch * model.w1.transpose();
    out.hidden.rowwise() += model.b1.transpose();
    out.hidden = out.hidden.cwiseMax(Scalar(0));
    out.logits = out.hidden * model.w2.transpose();
  }
  out.logits.rowwise() += model.b2.transpose();
  return out;
}

/// N×2 logits for an N×D batch.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(const Model<Scalar>& model,
                                                              const Eigen::MatrixBase<Derived>& batch) {
  return forward_pass(model, batch).logits;
}

}  // namespace sdnet
