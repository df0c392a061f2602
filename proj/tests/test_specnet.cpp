#include "oracles.hpp"

#include "sdnet/loss.hpp"
#include "sdnet/model.hpp"
#include "sdnet/synthgen.hpp"
#include "sdnet/train.hpp"
#include "sdnet/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace sdnet;

TEST_CASE("forward: zero parameters give zero logits") {
  auto m = Model<double>::zeros(ModelKind::OneHidden, 3, 4);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
  CHECK(forward(m, x).isZero(0));
}

TEST_CASE("forward: identity linear head") {
  auto m = Model<double>::zeros(ModelKind::Linear, 2, 0);
  m.w2 = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd x(1, 2);
  x << 1, 0;
  const Eigen::MatrixXd z = forward(m, x);
  CHECK(z(0, 0) == 1.0);
  CHECK(z(0, 1) == 0.0);
}

TEST_CASE("forward: matches a triple-loop oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto m = init_model(ModelKind::OneHidden, 7, 5, seed);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 7);
    CHECK((forward(m, x) - oracle::naive_forward(m, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward: dimension mismatch is rejected") {
  auto m = init_model(ModelKind::Linear, 4, 0, 1);
  CHECK_THROWS_AS(forward(m, Eigen::MatrixXd::Zero(2, 3)), InvalidArgument);
  CHECK_THROWS_AS(Model<double>::zeros(ModelKind::OneHidden, 4, 0), InvalidArgument);
}

TEST_CASE("cross_entropy: uniform, saturated and high-precision cases") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 2);
  Eigen::VectorXi y(4);
  y << 0, 1, 1, 0;
  CHECK(cross_entropy(z, y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Eigen::MatrixXd sat(1, 2);
  sat << 20, -20;
  Eigen::VectorXi y0 = Eigen::VectorXi::Zero(1);
  CHECK(cross_entropy(sat, y0) < 1e-15);

  Eigen::MatrixXd mixed(3, 2);
  mixed << 0.3, -1.2, 2.5, 2.4, -7.0, 3.0;
  Eigen::VectorXi ym(3);
  ym << 1, 0, 1;
  CHECK(cross_entropy(mixed, ym) == doctest::Approx(oracle::cross_entropy(mixed, ym)).epsilon(1e-14));
}

TEST_CASE("sd_penalty_eq1: values and edge cases") {
  Eigen::MatrixXd z(1, 2);
  z << 2, -1;
  CHECK(sd_penalty_eq1(z, 0.0) == 0.0);
  CHECK(sd_penalty_eq1(z, 0.01) == doctest::Approx(0.0125).epsilon(1e-15));
  Eigen::MatrixXd twice(2, 2);
  twice << 2, -1, 2, -1;
  CHECK(sd_penalty_eq1(twice, 0.01) == doctest::Approx(sd_penalty_eq1(z, 0.01)).epsilon(1e-15));
  CHECK_THROWS_AS(sd_penalty_eq1(z, -0.1), InvalidArgument);
}

TEST_CASE("sd_penalty_eq1 never decreases with lambda") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(8, 2) * 3.0;
  double prev = 0.0;
  for (double lambda : {0.0, 1e-6, 1e-4, 0.01, 0.1, 1.0, 10.0}) {
    const double p = sd_penalty_eq1(z, lambda);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("sd_penalty_eq2: tuned per-class values") {
  Eigen::VectorXi pos = Eigen::VectorXi::Ones(1), neg = Eigen::VectorXi::Zero(1);
  Eigen::MatrixXd at(1, 2);
  at << 2.61, 2.61;
  const auto tuned = SDConfig::eq2(0.0969, 1.83, 0.000698, 2.61);
  CHECK(sd_penalty_eq2(at, pos, tuned) == 0.0);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 2);
  CHECK(sd_penalty_eq2(zero, neg, tuned) == doctest::Approx(0.0969 / 2 * 1.83 * 1.83).epsilon(1e-14));
  CHECK(sd_penalty_eq2(zero, neg, tuned) == doctest::Approx(0.16226).epsilon(1e-4));

  Eigen::VectorXi bad(1);
  bad << 2;
  CHECK_THROWS_AS(sd_penalty_eq2(zero, bad, tuned), InvalidArgument);
  CHECK_THROWS_AS(sd_penalty_eq2(zero, neg, SDConfig::eq1(0.1)), InvalidArgument);
}

TEST_CASE("sd_penalty_eq2 with shared lambda and zero gamma equals eq1") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + int(rng() % 9);
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(n, 2) * 5.0;
    Eigen::VectorXi y = Eigen::VectorXi::NullaryExpr(n, [&] { return int(rng() & 1); });
    const double lambda = uniform01(rng);
    CHECK(sd_penalty_eq2(z, y, SDConfig::eq2(lambda, 0, lambda, 0)) ==
          doctest::Approx(sd_penalty_eq1(z, lambda)).epsilon(1e-14));
  }
}

TEST_CASE("loss_and_grad: zero lambda gives the plain cross-entropy gradient") {
  const auto c = oracle::random_gradient_case(4);
  const auto with = loss_and_grad(c.model, c.batch, c.labels, SDConfig::eq1(0.0));
  const auto without = loss_and_grad(c.model, c.batch, c.labels, SDConfig::off());
  CHECK(with.grad.flatten() == without.grad.flatten());
  CHECK(with.loss == without.loss);
}

TEST_CASE("loss_and_grad: analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = oracle::random_gradient_case(seed);
    const Eigen::VectorXd analytic = loss_and_grad(c.model, c.batch, c.labels, c.sd).grad.flatten();
    const Eigen::VectorXd numeric = oracle::finite_difference_grad(c.model, c.batch, c.labels, c.sd);
    for (Eigen::Index k = 0; k < analytic.size(); ++k) CHECK(oracle::rel_error(analytic(k), numeric(k)) < 1e-5);
  }
}

TEST_CASE("loss_and_grad: eq2 degenerate parameters reproduce eq1") {
  const auto c = oracle::random_gradient_case(8);
  const auto a = loss_and_grad(c.model, c.batch, c.labels, SDConfig::eq1(0.3));
  const auto b = loss_and_grad(c.model, c.batch, c.labels, SDConfig::eq2(0.3, 0, 0.3, 0));
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-15));
  CHECK((a.grad.flatten() - b.grad.flatten()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("loss_and_grad: non-finite loss aborts") {
  auto m = init_model(ModelKind::Linear, 2, 0, 1);
  m.w2(0, 0) = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 2);
  CHECK_THROWS_AS(loss_and_grad(m, x, Eigen::VectorXi::Zero(1), SDConfig::off()), TrainingError);
}

TEST_CASE("predict_proba: symmetric, saturated and high-precision") {
  auto m = Model<double>::zeros(ModelKind::Linear, 2, 0);
  m.w2 = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, -10, 10, 0.7, -0.4;
  const Eigen::VectorXd p = predict_proba(m, x);
  CHECK(p(0) == 0.5);
  CHECK(p(1) == doctest::Approx(1.0).epsilon(1e-8));
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(oracle::softmax_pos(x(i, 0), x(i, 1))).epsilon(1e-15));
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0.1, 0, 100) == 0.1);
  CHECK(std::abs(cosine_lr(0.1, 100, 100)) < 1e-17);
  CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05));
  CHECK(reference_learning_rate(512) == doctest::Approx(0.005));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.weight_decay = 1e-4;
  CHECK_NOTHROW(cfg.validate(SDConfig::off()));
  CHECK_THROWS_AS(cfg.validate(SDConfig::eq1(0.01)), InvalidArgument);
  cfg.weight_decay = 0;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(SDConfig::off()), InvalidArgument);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(SDConfig::off()), InvalidArgument);
  CHECK_THROWS_AS(SDConfig::eq1(-1).validate(), InvalidArgument);
}

namespace {

LabeledDataset separable(int n) {
  LabeledDataset d;
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  Rng rng(11);
  for (int i = 0; i < n; ++i) {
    d.labels(i) = i % 2;
    const double s = d.labels(i) ? 1.0 : -1.0;
    d.inputs(i, 0) = s * (0.5 + uniform01(rng));
    d.inputs(i, 1) = 2.0 * uniform01(rng) - 1.0;
  }
  return d;
}

}  // namespace

TEST_CASE("train: separable data reaches perfect training accuracy") {
  const auto d = separable(100);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.base_lr = 0.1;
  cfg.batch_size = 16;
  cfg.seed = 3;
  const auto r = train(init_model(ModelKind::Linear, 2, 0, 3), d, cfg, SDConfig::off());
  CHECK(accuracy(binarize(predict_proba(r.model, d)), d.labels) == 1.0);
  CHECK(r.trace.size() == 200);
  CHECK(r.trace.front().lr == cfg.base_lr);
}

TEST_CASE("train: identical seeds give bit-identical parameter traces") {
  const auto d = separable(64);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 9;
  TrainOptions opt;
  opt.keep_parameter_trace = true;
  const auto a = train(init_model(ModelKind::OneHidden, 2, 4, 9), d, cfg, SDConfig::eq1(0.01), opt);
  const auto b = train(init_model(ModelKind::OneHidden, 2, 4, 9), d, cfg, SDConfig::eq1(0.01), opt);
  REQUIRE(a.parameter_trace.size() == b.parameter_trace.size());
  for (std::size_t e = 0; e < a.parameter_trace.size(); ++e) CHECK(a.parameter_trace[e] == b.parameter_trace[e]);
}

TEST_CASE("train: SD off matches eq1 with lambda zero step for step") {
  const auto d = separable(64);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 2;
  TrainOptions opt;
  opt.keep_parameter_trace = true;
  const auto a = train(init_model(ModelKind::OneHidden, 2, 4, 2), d, cfg, SDConfig::off(), opt);
  const auto b = train(init_model(ModelKind::OneHidden, 2, 4, 2), d, cfg, SDConfig::eq1(0.0), opt);
  for (std::size_t e = 0; e < a.parameter_trace.size(); ++e) CHECK(a.parameter_trace[e] == b.parameter_trace[e]);
}

TEST_CASE("train: the logit penalty shrinks training logits") {
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto [tr, te] = make_linear_starvation_dataset(200, 2.0, 0.5, 0.5, 0.9, seed);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.base_lr = 0.2;
    cfg.batch_size = 20;
    cfg.seed = seed;
    const auto m0 = init_model(ModelKind::OneHidden, 2, 8, seed);
    with += forward(train(m0, tr, cfg, SDConfig::eq1(0.01)).model, tr.inputs).cwiseAbs().mean();
    without += forward(train(m0, tr, cfg, SDConfig::eq1(0.0)).model, tr.inputs).cwiseAbs().mean();
  }
  CHECK(with < without);
}

TEST_CASE("train: invalid inputs are rejected before training") {
  auto d = separable(10);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(init_model(ModelKind::Linear, 3, 0, 1), d, cfg, SDConfig::off()), InvalidArgument);
  d.inputs(0, 0) = std::nan("");
  CHECK_THROWS_AS(train(init_model(ModelKind::Linear, 2, 0, 1), d, cfg, SDConfig::off()), InvalidArgument);
}

TEST_CASE("checkpoint round trip preserves every parameter") {
  const auto m = init_model(ModelKind::OneHidden, 6, 3, 77);
  std::stringstream ss;
  save_checkpoint(m, ss);
  const auto back = load_checkpoint(ss);
  CHECK(back.kind == m.kind);
  CHECK(back.flatten() == m.flatten());
  std::stringstream bad("sdnet-checkpoint 1\nkind linear\nw1 0 0\n\nb1 0 0\n\nw2 2 2\n1 2 3\n");
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
}

TEST_CASE("loss trace CSV layout") {
  std::vector<EpochRecord> trace{{1, 0.1, 0.5, 0.75}};
  std::ostringstream os;
  write_trace_csv(trace, os);
  CHECK(os.str() == "epoch,lr,train_loss,val_metric\n1,0.1,0.5,0.75\n");
}

TEST_CASE("fold_input_shift reproduces centered logits on raw inputs") {
  for (auto kind : {ModelKind::Linear, ModelKind::OneHidden}) {
    const auto m = init_model(kind, 5, kind == ModelKind::Linear ? 0 : 4, 6);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 5);
    Eigen::RowVectorXd shift = Eigen::RowVectorXd::Random(5);
    Eigen::MatrixXd centered = x.rowwise() - shift;
    CHECK((forward(fold_input_shift(m, shift), x) - forward(m, centered)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("train: centered inputs give a model for raw inputs") {
  auto d = separable(80);
  d.inputs.col(1).array() += 5.0;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.base_lr = 0.1;
  cfg.batch_size = 16;
  TrainOptions opt;
  opt.center_inputs = true;
  const auto r = train(init_model(ModelKind::OneHidden, 2, 6, 1), d, cfg, SDConfig::off(), opt);
  CHECK(accuracy(binarize(predict_proba(r.model, d)), d.labels) == 1.0);
}
