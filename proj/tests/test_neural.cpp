#include "doctest.h"

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "necplus/error.hpp"
#include "necplus/neural.hpp"

using namespace necplus;
using namespace necplus::nn;
using necplus::testing::error_kind_of;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SampleWindow random_window(std::size_t h, std::size_t channels, std::size_t f, std::uint64_t seed,
                           std::vector<bool> mask) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SampleWindow w;
  w.input.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(channels));
  for (Eigen::Index i = 0; i < w.input.size(); ++i) w.input.data()[i] = n(rng);
  w.target.resize(static_cast<Eigen::Index>(f));
  for (Eigen::Index i = 0; i < w.target.size(); ++i) w.target(i) = n(rng);
  w.target_mask = std::move(mask);
  return w;
}

const std::vector<bool> kMixedMask{true, false, false, true, false, false};

}  // namespace

TEST_CASE("zero weights give zero hidden states") {
  auto net = NetStack::create(HeadKind::Normal, 3, 2, 5, 4, 1).zeros_like();
  std::vector<Eigen::MatrixXd> inputs(7, Eigen::MatrixXd::Constant(3, 2, 0.7));
  for (const auto& h : lstm_forward(net.lstm[0], inputs)) CHECK(h.isZero(0.0));
}

TEST_CASE("single cell matches hand arithmetic over two steps") {
  LstmLayer layer;
  layer.w_input.resize(4, 1);
  layer.w_input << 0.5, -0.3, 0.8, 0.2;
  layer.w_recurrent.resize(4, 1);
  layer.w_recurrent << 0.1, 0.4, -0.6, 0.3;
  layer.bias.resize(4);
  layer.bias << 0.1, 0.2, -0.1, 0.05;
  const double x1 = 2.0, x2 = -1.0;
  std::vector<Eigen::MatrixXd> inputs{Eigen::MatrixXd::Constant(1, 1, x1), Eigen::MatrixXd::Constant(1, 1, x2)};
  const auto hs = lstm_forward(layer, inputs);

  double i = sigmoid(0.5 * x1 + 0.1), f = sigmoid(-0.3 * x1 + 0.2);
  double g = std::tanh(0.8 * x1 - 0.1), o = sigmoid(0.2 * x1 + 0.05);
  double c = f * 0.0 + i * g;
  double h = o * std::tanh(c);
  CHECK(std::abs(hs[0](0, 0) - h) < 1e-12);

  i = sigmoid(0.5 * x2 + 0.1 * h + 0.1);
  f = sigmoid(-0.3 * x2 + 0.4 * h + 0.2);
  g = std::tanh(0.8 * x2 - 0.6 * h - 0.1);
  o = sigmoid(0.2 * x2 + 0.3 * h + 0.05);
  c = f * c + i * g;
  h = o * std::tanh(c);
  CHECK(std::abs(hs[1](0, 0) - h) < 1e-12);
}

TEST_CASE("forward is per-sample and deterministic") {
  const auto net = NetStack::create(HeadKind::Extreme, 3, 2, 8, 6, 2);
  const auto a = random_window(12, 3, 6, 1, kMixedMask);
  const auto b = random_window(12, 3, 6, 2, kMixedMask);
  const Eigen::MatrixXd* ab[] = {&a.input, &b.input};
  const Eigen::MatrixXd* ba[] = {&b.input, &a.input};
  const Eigen::MatrixXd out_ab = forward_batch(net, ab);
  const Eigen::MatrixXd out_ba = forward_batch(net, ba);
  CHECK((out_ab.col(0) - out_ba.col(1)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((out_ab.col(1) - out_ba.col(0)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((forward(net, a.input) - out_ab.col(0)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(forward(net, a.input) == forward(net, a.input));
}

TEST_CASE("head shapes and outputs") {
  const auto reg = NetStack::create(HeadKind::Normal, 4, 3, 16, 6, 3);
  CHECK(reg.lstm.size() == 3);
  CHECK(reg.fc.size() == 3);
  CHECK(reg.horizon() == 6);
  CHECK(reg.input_dim() == 4);
  CHECK(reg.width() == 16);

  const auto cls = NetStack::create(HeadKind::Classifier, 4, 2, 16, 6, 3);
  CHECK(cls.fc.size() == 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto w = random_window(10, 4, 6, s, kMixedMask);
    w.input *= 50.0;
    const auto p = forward(cls, w.input);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      CHECK(p(i) > 0.0);
      CHECK(p(i) < 1.0);
    }
  }

  auto flat = reg;
  for (auto& layer : flat.fc) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  flat.fc.back().bias.setConstant(0.25);
  const auto w = random_window(10, 4, 6, 9, kMixedMask);
  CHECK(forward(flat, w.input) == Eigen::VectorXd::Constant(6, 0.25));

  NetStack copy = reg;
  std::size_t total = 0;
  for (const auto& b : parameter_blocks(copy)) total += b.values.size();
  CHECK(total == reg.parameter_count());
}

TEST_CASE("dimension errors") {
  const auto net = NetStack::create(HeadKind::Normal, 3, 1, 4, 6, 0);
  const auto w = random_window(12, 2, 6, 0, kMixedMask);
  CHECK(error_kind_of([&] { forward(net, w.input); }) == ErrorKind::Dimension);
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  CHECK(error_kind_of([&] { masked_mse_loss(p, p, {true}); }) == ErrorKind::Dimension);
}

TEST_CASE("masked_mse_loss") {
  SUBCASE("hand example") {
    Eigen::VectorXd pred(3), target = Eigen::VectorXd::Zero(3);
    pred << 1.0, 2.0, 3.0;
    const auto r = masked_mse_loss(pred, target, {true, false, true});
    CHECK(r.loss == 5.0);
    CHECK(r.grad(1) == 0.0);
    CHECK(r.grad(0) == 1.0);
    CHECK(r.grad(2) == 3.0);
  }
  SUBCASE("empty selection contributes nothing") {
    const Eigen::VectorXd pred = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
    const auto r = masked_mse_loss(pred, Eigen::VectorXd::Ones(4), std::vector<bool>(4, false));
    CHECK(r.loss == 0.0);
    CHECK(r.grad.isZero(0.0));
  }
  SUBCASE("full selection is plain MSE") {
    Eigen::VectorXd pred(4), target(4);
    pred << 0.5, -1.0, 2.0, 3.0;
    target << 0.0, 1.0, 1.0, -1.0;
    const auto r = masked_mse_loss(pred, target, std::vector<bool>(4, true));
    CHECK(r.loss == doctest::Approx((pred - target).squaredNorm() / 4.0).epsilon(1e-15));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(r.grad(i) == 2.0 * (pred(i) - target(i)) / 4.0);
  }
}

TEST_CASE("classifier_loss") {
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(1, 0.5);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  CHECK(classifier_loss(half, one, 1.0, 1.0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  double prev = 0.0;
  for (double alpha : {1.0, 2.0, 3.0}) {
    const double l = classifier_loss(half, one, alpha, 1.0).loss;
    CHECK(l == doctest::Approx(alpha * std::log(2.0)).epsilon(1e-12));
    CHECK(l > prev);
    prev = l;
  }

  Eigen::VectorXd t(4), p(4);
  t << 1.0, 0.0, 1.0, 0.0;
  CHECK(classifier_loss(t, t, 1.0, 1.0).loss <= 2e-7);

  p << 0.9, 0.2, 0.6, 0.05;
  double bce = 0.0;
  for (int i = 0; i < 4; ++i) bce += -(t(i) * std::log(p(i)) + (1.0 - t(i)) * std::log(1.0 - p(i)));
  CHECK(classifier_loss(p, t, 1.0, 1.0).loss == doctest::Approx(bce / 4.0).epsilon(1e-14));
  CHECK(classifier_loss(p, t, 2.5, 0.0).loss == doctest::Approx(std::sqrt((p - t).squaredNorm() / 4.0)).epsilon(1e-14));

  CHECK(error_kind_of([&] { classifier_loss(p, t, 0.5, 0.5); }) == ErrorKind::Config);
  CHECK(error_kind_of([&] { classifier_loss(p, t, 2.0, 1.5); }) == ErrorKind::Config);
  CHECK(error_kind_of([&] { LossSpec::classifier(1.0, -0.1); }) == ErrorKind::Config);
}

TEST_CASE("analytic gradients match finite differences") {
  // step 1e-4: at 1e-5 roundoff dominates on gradient entries near 1e-7
  constexpr double eps = 1e-4;
  std::vector<bool> complement(kMixedMask.size());
  for (std::size_t i = 0; i < complement.size(); ++i) complement[i] = !kMixedMask[i];
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CAPTURE(seed);
    const auto w = random_window(12, 3, 6, 42 + seed, kMixedMask);
    const auto wc = random_window(12, 3, 6, 42 + seed, complement);
    const auto n = NetStack::create(HeadKind::Normal, 3, 2, 8, 6, 10 + seed);
    CHECK(gradient_check(n, w, LossSpec::normal(), eps) < 1e-4);
    const auto e = NetStack::create(HeadKind::Extreme, 3, 2, 8, 6, 20 + seed);
    CHECK(gradient_check(e, wc, LossSpec::extreme(), eps) < 1e-4);
    const auto c = NetStack::create(HeadKind::Classifier, 3, 2, 8, 6, 30 + seed);
    for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{3.0, 0.45}}) {
      CHECK(gradient_check(c, w, LossSpec::classifier(a, b), eps) < 1e-4);
    }
  }
}

TEST_CASE("backward linearity and empty selections") {
  const auto net = NetStack::create(HeadKind::Normal, 3, 2, 6, 6, 13);
  const auto w = random_window(10, 3, 6, 7, kMixedMask);
  const Eigen::MatrixXd* in[] = {&w.input};
  ForwardCache cache;
  const Eigen::MatrixXd out = forward_batch(net, in, &cache);
  const auto loss = evaluate_loss(LossSpec::normal(), out.col(0), w);

  auto g1 = backward(net, cache, loss.grad);
  auto g2 = backward(net, cache, 2.0 * loss.grad);
  auto b1 = parameter_blocks(g1);
  auto b2 = parameter_blocks(g2);
  for (std::size_t b = 0; b < b1.size(); ++b) {
    for (std::size_t i = 0; i < b1[b].values.size(); ++i) REQUIRE(b2[b].values[i] == 2.0 * b1[b].values[i]);
  }

  const auto quiet = random_window(10, 3, 6, 8, std::vector<bool>(6, false));
  const SampleWindow* batch[] = {&quiet};
  auto zero = loss_and_gradient(net, batch, LossSpec::extreme());
  CHECK(zero.loss == 0.0);
  for (const auto& b : parameter_blocks(zero.gradient)) {
    for (double v : b.values) REQUIRE(v == 0.0);
  }
  CHECK(gradient_check(net, quiet, LossSpec::extreme()) == 0.0);
}

TEST_CASE("non-finite gradients are reported with the layer") {
  const auto net = NetStack::create(HeadKind::Normal, 3, 2, 6, 6, 14);
  const auto w = random_window(10, 3, 6, 7, kMixedMask);
  const Eigen::MatrixXd* in[] = {&w.input};
  ForwardCache cache;
  forward_batch(net, in, &cache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(6, 1);
  grad(2, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    backward(net, cache, grad);
    FAIL("expected a numeric-instability error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericInstability);
    CHECK(std::string(e.what()).find("fc layer") != std::string::npos);
  }
}
