#include <gtest/gtest.h>

#include <cmath>

#include "pkan/nets.hpp"
#include "support.hpp"

using namespace pkan;
using testing_support::Gen;

namespace {

ModelConfig small_config(Family f, Likelihood l, std::vector<std::size_t> hidden = {5, 3}) {
  ModelConfig c = ModelConfig::defaults(f, l);
  c.context = 7;
  c.horizon = 4;
  c.hidden_sizes = std::move(hidden);
  c.num_basis = 6;
  c.seed = 42;
  return c;
}

void randomize(ModelState& m, Gen& gen, double scale = 0.5) {
  for (Tensor* t : m.parameters()) {
    for (double& v : t->values()) v = gen.normal(scale);
  }
}

}  // namespace

TEST(KanLayer, ZeroEdgesGiveZero) {
  KanLayer layer(3, 2, SplineSpec());
  const Var out = kan_layer_forward(layer, Var::constant(Tensor::vector({0.3, -1.0, 2.0})));
  ASSERT_EQ(out.shape(), (Shape{2}));
  EXPECT_EQ(out.value()[0], 0.0);
  EXPECT_EQ(out.value()[1], 0.0);
}

TEST(KanLayer, SingleEdgeIsSilu) {
  KanLayer layer(1, 1, SplineSpec());
  layer.set_edge(0, 0, {1.0, 0.0, std::vector<double>(8, 0.4)});
  for (double x : {-4.0, -0.5, 0.0, 1.3, 5.0}) {
    EXPECT_NEAR(kan_layer_forward(layer, Var::constant(Tensor::vector({x}))).value()[0], x / (1 + std::exp(-x)), 1e-15);
  }
}

TEST(KanLayer, MatchesHandRolledDoubleLoop) {
  Gen gen(3);
  const SplineSpec spec(3, 8, -3.0, 3.0);
  KanLayer layer(3, 2, spec);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      ConnectionParams p{gen.normal(), gen.normal(), {}};
      for (int r = 0; r < 8; ++r) p.c.push_back(gen.normal());
      layer.set_edge(o, i, p);
    }
  }
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> x = {gen.uniform(-4, 4), gen.uniform(-4, 4), gen.uniform(-4, 4)};
    const Var out = kan_layer_forward(layer, Var::constant(Tensor::vector(x)));
    for (std::size_t o = 0; o < 2; ++o) {
      double want = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        const auto p = layer.edge(o, i);
        const auto b = basis_eval(spec, x[i]);
        double spline = 0.0;
        for (std::size_t r = 0; r < 8; ++r) spline += p.c[r] * b[r];
        want += p.w * x[i] / (1.0 + std::exp(-x[i])) + p.s * spline;
      }
      EXPECT_NEAR(out.value()[o], want, 1e-12);
    }
  }
}

TEST(KanLayer, BatchRowsMatchSingleInputs) {
  Gen gen(4);
  KanLayer layer(4, 3, SplineSpec());
  for (Tensor* t : {&layer.base_weight, &layer.spline_scale, &layer.coefficients}) {
    for (double& v : t->values()) v = gen.normal();
  }
  const Tensor batch = gen.tensor({5, 4}, -3.5, 3.5);
  const Var out = kan_layer_forward(layer, Var::constant(batch));
  for (std::size_t b = 0; b < 5; ++b) {
    std::vector<double> row(batch.values().begin() + b * 4, batch.values().begin() + b * 4 + 4);
    const Var single = kan_layer_forward(layer, Var::constant(Tensor::vector(row)));
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(out.value()[b * 3 + o], single.value()[o], 1e-14);
  }
}

TEST(KanLayer, LengthMismatchThrows) {
  KanLayer layer(3, 2, SplineSpec());
  EXPECT_THROW(kan_layer_forward(layer, Var::constant(Tensor::vector({1.0, 2.0}))), ShapeError);
}

TEST(Mlp, IdentityAndZeroWeights) {
  MlpLayer id(3, 3, Activation::identity);
  for (std::size_t i = 0; i < 3; ++i) id.weight[i * 3 + i] = 1.0;
  const std::vector<MlpLayer> stack{id};
  const Var x = Var::constant(Tensor::vector({0.5, -2.0, 7.0}));
  EXPECT_EQ(mlp_forward(stack, x).value(), x.value());

  MlpLayer zero(3, 2, Activation::identity);
  zero.bias = Tensor::vector({1.5, -0.25});
  const std::vector<MlpLayer> z{zero};
  const Var out = mlp_forward(z, x);
  EXPECT_EQ(out.value()[0], 1.5);
  EXPECT_EQ(out.value()[1], -0.25);
}

TEST(Mlp, TwoLayerMatchesMatrixArithmetic) {
  Gen gen(5);
  MlpLayer a(4, 3, Activation::silu), b(3, 2, Activation::identity);
  for (auto* l : {&a, &b}) {
    for (double& v : l->weight.values()) v = gen.normal();
    for (double& v : l->bias.values()) v = gen.normal();
  }
  const std::vector<double> x = {0.1, -0.7, 1.9, 0.4};
  std::vector<double> h(3);
  for (std::size_t j = 0; j < 3; ++j) {
    double z = a.bias[j];
    for (std::size_t i = 0; i < 4; ++i) z += x[i] * a.weight[i * 3 + j];
    h[j] = z / (1 + std::exp(-z));
  }
  const std::vector<MlpLayer> stack{a, b};
  const Var out = mlp_forward(stack, Var::constant(Tensor::vector(x)));
  for (std::size_t k = 0; k < 2; ++k) {
    double want = b.bias[k];
    for (std::size_t j = 0; j < 3; ++j) want += h[j] * b.weight[j * 2 + k];
    EXPECT_NEAR(out.value()[k], want, 1e-14);
  }
  EXPECT_THROW(mlp_forward(stack, Var::constant(Tensor::vector({1.0}))), ShapeError);
}

TEST(Predict, AllZeroParameters) {
  for (Family f : {Family::p_kan, Family::p_mlp}) {
    ModelState m = init_model(small_config(f, Likelihood::student_t));
    for (Tensor* t : m.parameters()) t->fill(0.0);
    m.standardizer = {50.0, 4.0};
    const auto fc = std::get<DistributionParams>(predict(m, std::vector<double>(7, 13.0)));
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(fc.mu[t], 50.0);
      EXPECT_NEAR(fc.sigma[t], (std::log(2.0) + kSigmaFloor) * 4.0, 1e-15);
      EXPECT_NEAR(fc.nu[t], 2.0 + std::log(2.0) + kNuFloor, 1e-15);
      EXPECT_NEAR(fc.nu[t], 2.6931, 1e-4);
    }
  }
}

TEST(Predict, PointFamiliesReturnRawValues) {
  ModelState m = init_model(small_config(Family::kan_pf, Likelihood::none));
  m.standardizer = {10.0, 2.0};
  const auto fc = predict(m, std::vector<double>(7, 11.0));
  ASSERT_TRUE(std::holds_alternative<PointForecast>(fc));
  EXPECT_EQ(std::get<PointForecast>(fc).values.size(), 4u);
}

TEST(PredictProperty, RangesDeterminismAndShift) {
  Gen gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Family f = gen.coin() ? Family::p_kan : Family::p_mlp;
    const Likelihood l = gen.coin() ? Likelihood::gaussian : Likelihood::student_t;
    ModelState m = init_model(small_config(f, l));
    randomize(m, gen, gen.uniform(0.1, 3.0));
    m.standardizer = {std::round(gen.uniform(0, 100)), gen.uniform(0.5, 20)};
    std::vector<double> ctx(7);
    for (double& v : ctx) v = std::round(gen.uniform(0, 200));
    const auto a = std::get<DistributionParams>(predict(m, ctx));
    const auto b = std::get<DistributionParams>(predict(m, ctx));
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_EQ(a.nu, b.nu);
    for (double s : a.sigma) EXPECT_GT(s, 0.0);
    for (double n : a.nu) EXPECT_GT(n, 2.0);

    const double shift = std::round(gen.uniform(-50, 50));
    ModelState shifted = m;
    shifted.standardizer.mean += shift;
    std::vector<double> ctx2 = ctx;
    for (double& v : ctx2) v += shift;
    const auto c = std::get<DistributionParams>(predict(shifted, ctx2));
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_NEAR(c.mu[t], a.mu[t] + shift, 1e-9 * (1 + std::abs(a.mu[t])));
      EXPECT_EQ(c.sigma[t], a.sigma[t]);
    }
  }
}

TEST(Predict, ExtremeParametersStillGiveValidRanges) {
  ModelState m = init_model(small_config(Family::p_mlp, Likelihood::student_t, {3}));
  for (Tensor* t : m.parameters()) t->fill(-30.0);
  const auto fc = std::get<DistributionParams>(predict(m, std::vector<double>(7, 1.0)));
  for (double s : fc.sigma) EXPECT_GT(s, 0.0);
  for (double n : fc.nu) EXPECT_GT(n, 2.0);
}

TEST(Predict, NonFiniteOutputNamesLayer) {
  ModelState m = init_model(small_config(Family::p_mlp, Likelihood::gaussian, {3}));
  std::get<MlpLayer>(m.trunk[0]).weight.fill(1e300);
  try {
    (void)predict(m, std::vector<double>(7, 1e10));
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.index(), 0u);
  }
  EXPECT_THROW(predict(m, std::vector<double>(6, 1.0)), ShapeError);
}

TEST(CountParameters, SpecExamples) {
  EXPECT_EQ(KanLayer::count(3, 2, 8), 60u);
  EXPECT_EQ(MlpLayer::count(3, 2), 8u);
  ModelConfig kan = ModelConfig::defaults(Family::kan_pf, Likelihood::none);
  kan.context = 3;
  kan.horizon = 2;
  kan.hidden_sizes = {};
  EXPECT_EQ(count_parameters(kan), 60u);
  EXPECT_EQ(init_model(kan).flatten().size(), 60u);
  ModelConfig mlp = kan;
  mlp.family = Family::mlp_pf;
  EXPECT_EQ(count_parameters(mlp), 8u);
}

TEST(CountParameters, EqualWidthKanExceedsMlp) {
  ModelConfig kan = ModelConfig::defaults(Family::p_kan, Likelihood::gaussian);
  kan.hidden_sizes = {64};
  ModelConfig mlp = ModelConfig::defaults(Family::p_mlp, Likelihood::gaussian);
  mlp.hidden_sizes = {64};
  EXPECT_EQ(count_parameters(kan), 64u * 168 * 10 + 2 * 24u * 64 * 10);
  EXPECT_EQ(count_parameters(mlp), 64u * 169 + 2 * 24u * 65);
  EXPECT_GT(count_parameters(kan), count_parameters(mlp));
}

TEST(CountParameters, DefaultsLandInReportedBands) {
  for (Likelihood l : {Likelihood::gaussian, Likelihood::student_t}) {
    const auto kan = count_parameters(ModelConfig::defaults(Family::p_kan, l));
    const auto mlp = count_parameters(ModelConfig::defaults(Family::p_mlp, l));
    EXPECT_GE(kan, 82000u);
    EXPECT_LE(kan, 90000u);
    EXPECT_GT(mlp, 240000u);
  }
}

TEST(CountParametersProperty, EqualsFlattenedLengthOverGrid) {
  for (Family f : {Family::p_kan, Family::p_mlp, Family::kan_pf, Family::mlp_pf}) {
    for (Likelihood l : {Likelihood::gaussian, Likelihood::student_t}) {
      for (std::size_t c : {1, 5, 24}) {
        for (std::size_t h : {1, 4}) {
          for (const auto& hidden : std::vector<std::vector<std::size_t>>{{}, {3}, {6, 2}, {4, 4, 4}}) {
            for (std::size_t R : {4, 8}) {
              ModelConfig cfg = ModelConfig::defaults(f, l);
              cfg.context = c;
              cfg.horizon = h;
              cfg.hidden_sizes = hidden;
              cfg.num_basis = R;
              EXPECT_EQ(count_parameters(cfg), init_model(cfg).flatten().size());
            }
          }
        }
      }
    }
  }
}

TEST(ModelConfig, ValidationAndLabels) {
  ModelConfig c = ModelConfig::defaults(Family::p_kan, Likelihood::gaussian);
  EXPECT_EQ(c.label(), "p_kan_gaussian");
  EXPECT_EQ(ModelConfig::defaults(Family::mlp_pf, Likelihood::gaussian).label(), "mlp_pf");
  c.likelihood = Likelihood::none;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig::defaults(Family::p_mlp, Likelihood::student_t);
  c.horizon = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig::defaults(Family::p_mlp, Likelihood::student_t);
  c.hidden_sizes = {4, 0};
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(parse_family("p_rnn"), InvalidArgument);
  EXPECT_EQ(parse_family("kan_pf"), Family::kan_pf);
}

TEST(InitModel, SeededAndDistinctAcrossSeeds) {
  ModelConfig c = small_config(Family::p_kan, Likelihood::gaussian);
  EXPECT_EQ(init_model(c).flatten(), init_model(c).flatten());
  ModelConfig d = c;
  d.seed = 43;
  EXPECT_NE(init_model(c).flatten(), init_model(d).flatten());
  const ModelState m = init_model(c);
  for (double s : std::get<KanLayer>(m.trunk[0]).spline_scale.values()) EXPECT_EQ(s, 1.0);
}

TEST(ModelState, FlattenAssignRoundTrip) {
  Gen gen(2);
  ModelState m = init_model(small_config(Family::p_mlp, Likelihood::student_t));
  auto flat = m.flatten();
  for (double& v : flat) v = gen.normal();
  m.assign(flat);
  EXPECT_EQ(m.flatten(), flat);
  flat.pop_back();
  EXPECT_THROW(m.assign(flat), InvalidArgument);
}
