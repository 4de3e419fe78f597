#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fedmpa/error.hpp"
#include "fedmpa/gradcheck.hpp"
#include "fedmpa/nn.hpp"
#include "oracles.hpp"

using namespace fedmpa;

namespace {

// Straight-line forward pass: affine + ReLU on every hidden layer.
oracle::Mat forward_oracle(const MlpParams& p, const DenseMatrix& x) {
  oracle::Mat h = oracle::from(x);
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    const auto& layer = p.layer(l);
    oracle::Mat out = oracle::zeros(h.size(), layer.weight.cols());
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < layer.weight.cols(); ++j) {
        double s = layer.bias[j];
        for (std::size_t k = 0; k < layer.weight.rows(); ++k) s += h[i][k] * layer.weight(k, j);
        out[i][j] = (l + 1 < p.n_layers()) ? std::max(0.0, s) : s;
      }
    h = out;
  }
  return h;
}

MlpParams random_params(std::vector<std::size_t> dims, std::uint64_t seed) {
  auto p = MlpParams::glorot(std::move(dims), seed);
  Rng rng(seed + 1);
  for (std::size_t l = 0; l < p.n_layers(); ++l)
    for (double& b : p.mutable_layer(l).bias) b = 0.2 * (uniform01(rng) - 0.5);
  return p;
}

}  // namespace

TEST(Mlp, ZeroParamsGiveZeroLogits) {
  MlpParams p(mlp_dims(3, 4, 3, 2));
  Rng rng(0);
  auto out = mlp_forward(p, oracle::random_matrix(5, 3, 1), 0.0, Mode::Eval, rng);
  for (double v : out.logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, IdentitySingleLayer) {
  MlpParams p({3, 3});
  p.mutable_layer(0).weight = DenseMatrix::identity(3);
  auto x = oracle::random_matrix(4, 3, 2);
  Rng rng(0);
  EXPECT_EQ(mlp_forward(p, x, 0.5, Mode::Eval, rng).logits, x);
}

TEST(Mlp, MatchesStraightLineForward) {
  auto p = random_params(mlp_dims(3, 6, 3, 4), 5);
  auto x = oracle::random_matrix(4, 3, 6);
  Rng rng(0);
  auto out = mlp_forward(p, x, 0.0, Mode::Eval, rng);
  EXPECT_LT(oracle::max_abs_diff(forward_oracle(p, x), out.logits), 1e-14);
}

TEST(Mlp, ShapeAndDomainErrors) {
  auto p = random_params(mlp_dims(3, 4, 1, 2), 1);
  Rng rng(0);
  EXPECT_THROW(mlp_forward(p, DenseMatrix(2, 4), 0.0, Mode::Eval, rng), ShapeError);
  EXPECT_THROW(mlp_forward(p, DenseMatrix(2, 3), 1.0, Mode::Train, rng), DomainError);
}

TEST(Mlp, StaleTapeRejected) {
  auto p = random_params(mlp_dims(3, 4, 1, 2), 1);
  Rng rng(0);
  auto out = mlp_forward(p, oracle::random_matrix(2, 3, 1), 0.0, Mode::Eval, rng);
  p.mutable_layer(0).bias[0] += 1.0;
  EXPECT_THROW(backward(p, out.tape, DenseMatrix(2, 2)), ContractError);
  auto other = random_params(mlp_dims(3, 4, 1, 2), 2);
  EXPECT_THROW(backward(other, out.tape, DenseMatrix(2, 2)), ContractError);
}

TEST(Mlp, ZeroUpstreamGivesZeroGrads) {
  auto p = random_params(mlp_dims(3, 5, 2, 2), 3);
  Rng rng(0);
  auto out = mlp_forward(p, oracle::random_matrix(6, 3, 4), 0.0, Mode::Eval, rng);
  for (double g : backward(p, out.tape, DenseMatrix(6, 2)).flatten()) EXPECT_EQ(g, 0.0);
}

TEST(Mlp, LinearLayerClosedForm) {
  // loss = sum(XW + b): dW[k][j] = sum_i X[i][k], db[j] = rows.
  auto p = random_params({3, 2}, 9);
  auto x = oracle::random_matrix(5, 3, 10);
  Rng rng(0);
  auto out = mlp_forward(p, x, 0.0, Mode::Eval, rng);
  auto g = backward(p, out.tape, DenseMatrix(5, 2, 1.0));
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += x(i, k);
    EXPECT_NEAR(g.layer(0).weight(k, 0), s, 1e-14);
    EXPECT_NEAR(g.layer(0).weight(k, 1), s, 1e-14);
  }
  EXPECT_EQ(g.layer(0).bias[0], 5.0);
}

TEST(Mlp, FiniteDifferenceThreeHiddenLayers) {
  auto p = random_params(mlp_dims(4, 7, 3, 3), 12);
  auto x = oracle::random_matrix(6, 4, 13);
  std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2}, mask{0, 1, 2, 3, 4, 5};
  auto loss_at = [&](const MlpParams& q) {
    Rng rng(0);
    return softmax_ce_loss(mlp_forward(q, x, 0.0, Mode::Eval, rng).logits, labels, mask).loss;
  };
  Rng rng(0);
  auto out = mlp_forward(p, x, 0.0, Mode::Eval, rng);
  auto grad = backward(p, out.tape, softmax_ce_loss(out.logits, labels, mask).grad).flatten();
  auto flat = p.flatten();
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto fp = flat, fm = flat;
    fp[i] += h;
    fm[i] -= h;
    MlpParams a = p, b = p;
    a.unflatten(fp);
    b.unflatten(fm);
    const double numeric = (loss_at(a) - loss_at(b)) / (2 * h);
    EXPECT_LT(relative_error(grad[i], numeric), 1e-4) << "parameter " << i;
  }
}

TEST(Mlp, DropoutExpectation) {
  // A single linear layer with dropout only on the input: the mean of the
  // dropped output converges to the eval output.
  auto p = random_params({4, 1}, 21);
  auto x = oracle::random_matrix(1, 4, 22);
  Rng rng(23);
  const double eval = mlp_forward(p, x, 0.3, Mode::Eval, rng).logits(0, 0);
  const int n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < n; ++t) {
    const double v = mlp_forward(p, x, 0.3, Mode::Train, rng).logits(0, 0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - eval), 3.0 * se);
}

TEST(Mlp, FlattenRoundTrip) {
  auto p = random_params(mlp_dims(3, 4, 2, 2), 30);
  auto flat = p.flatten();
  EXPECT_EQ(flat.size(), p.parameter_count());
  MlpParams q(p.dims());
  q.unflatten(flat);
  EXPECT_EQ(q, p);
  EXPECT_EQ(q.flatten(), flat);
  EXPECT_THROW(q.unflatten(std::vector<double>(flat.size() + 1)), ShapeError);
}

TEST(Mlp, GlorotRangeAndDeterminism) {
  auto a = MlpParams::glorot(mlp_dims(10, 64, 3, 5), 4);
  EXPECT_EQ(a, MlpParams::glorot(mlp_dims(10, 64, 3, 5), 4));
  EXPECT_NE(a, MlpParams::glorot(mlp_dims(10, 64, 3, 5), 5));
  const double limit = std::sqrt(6.0 / (10 + 64));
  for (double w : a.layer(0).weight.values()) EXPECT_LE(std::abs(w), limit);
  for (double b : a.layer(0).bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(a.n_layers(), 4u);
}

TEST(Loss, SoftmaxCrossEntropy) {
  std::vector<std::size_t> labels(3, 2), mask{0, 1, 2};
  auto uniform = softmax_ce_loss(DenseMatrix(3, 7), labels, mask);
  EXPECT_NEAR(uniform.loss, std::log(7.0), 1e-15);

  DenseMatrix sharp(1, 3, {0.0, 0.0, 800.0});
  std::vector<std::size_t> one{0};
  EXPECT_LT(softmax_ce_loss(sharp, std::vector<std::size_t>{2}, one).loss, 1e-300);

  auto logits = oracle::random_matrix(5, 3, 40);
  std::vector<std::size_t> y{0, 2, 1, 1, 0}, sub{1, 3, 4};
  auto r = softmax_ce_loss(logits, y, sub);
  double want = 0.0;
  for (auto i : sub) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits(i, c));
    want -= std::log(std::exp(logits(i, y[i])) / z);
    for (std::size_t c = 0; c < 3; ++c) {
      const double g = (std::exp(logits(i, c)) / z - (c == y[i] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(r.grad(i, c), g, 1e-15);
    }
  }
  EXPECT_NEAR(r.loss, want / 3.0, 1e-14);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r.grad(0, c), 0.0);
  EXPECT_THROW(softmax_ce_loss(logits, y, std::vector<std::size_t>{}), DomainError);
}

TEST(Loss, Mse) {
  auto a = oracle::random_matrix(3, 3, 50);
  auto same = mse_matrix(a, a);
  EXPECT_EQ(same.loss, 0.0);
  for (double g : same.grad.values()) EXPECT_EQ(g, 0.0);
  EXPECT_DOUBLE_EQ(mse_matrix(DenseMatrix::identity(2), DenseMatrix(2, 2)).loss, 0.5);
  auto b = oracle::random_matrix(3, 3, 51);
  auto r = mse_matrix(a, b);
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      want += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j)) / 9.0;
      EXPECT_NEAR(r.grad(i, j), 2.0 * (b(i, j) - a(i, j)) / 9.0, 1e-15);
    }
  EXPECT_NEAR(r.loss, want, 1e-15);
  EXPECT_THROW(mse_matrix(a, DenseMatrix(2, 3)), ShapeError);
}

TEST(Optimizer, SgdAndZeroGrad) {
  OptimizerConfig sgd;
  sgd.kind = OptimizerConfig::Kind::Sgd;
  Optimizer opt(sgd);
  std::vector<double> w{1.0, -2.0}, g{1.0, 1.0};
  opt.step(w, g);
  EXPECT_DOUBLE_EQ(w[0], 0.99);
  EXPECT_DOUBLE_EQ(w[1], -2.01);

  Optimizer adam;
  std::vector<double> z{0.5, 0.25}, zero{0.0, 0.0};
  adam.step(z, zero);
  EXPECT_EQ(z, (std::vector<double>{0.5, 0.25}));
}

TEST(Optimizer, AdamHandSteppedQuadratic) {
  // f(w) = (w - 3)^2, two Adam steps by hand.
  Optimizer adam;
  std::vector<double> w{0.0};
  double m = 0.0, v = 0.0, ref = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * (ref - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    ref -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    std::vector<double> grad{2.0 * (w[0] - 3.0)};
    adam.step(w, grad);
    EXPECT_NEAR(w[0], ref, 1e-15);
  }
  EXPECT_EQ(adam.steps(), 2u);
  std::vector<double> wrong(2);
  EXPECT_THROW(adam.step(wrong, wrong), ShapeError);
}

TEST(Checkpoint, RoundTripAndErrors) {
  auto dir = oracle::scratch_dir("ckpt");
  auto p = random_params(mlp_dims(3, 5, 2, 2), 60);
  save_checkpoint(dir / "p.fmpa", p);
  EXPECT_EQ(load_checkpoint(dir / "p.fmpa"), p);
  std::ifstream in(dir / "p.fmpa", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "FMPA");
  EXPECT_THROW(load_checkpoint(dir / "none.fmpa"), IoError);
  std::ofstream(dir / "junk.fmpa") << "nope";
  EXPECT_THROW(load_checkpoint(dir / "junk.fmpa"), IoError);
}

TEST(GradCheck, EveryPathPasses) {
  for (const auto& r : run_gradcheck()) {
    EXPECT_TRUE(r.passed()) << r.path << " " << r.max_rel_error;
    EXPECT_EQ(r.probes, 100u);
  }
}
