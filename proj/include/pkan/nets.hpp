#pragma once

// KAN and MLP layers, probabilistic / point heads, model assembly and
// parameter counting.
//
// Model families:
//   p_kan   KAN trunk, one KAN head per distribution parameter
//   p_mlp   SiLU MLP trunk, one linear head per distribution parameter
//   kan_pf  KAN trunk, single KAN point head
//   mlp_pf  SiLU MLP trunk, single linear point head
//
// Heads map the final trunk representation to the h-step horizon:
//   mu = f_mu(z), sigma = softplus(f_sigma(z)) + 1e-6, nu = 2 + softplus(f_nu(z)).
// Everything inside the network lives in standardized units.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pkan/autodiff.hpp"
#include "pkan/error.hpp"
#include "pkan/likelihood.hpp"
#include "pkan/spline.hpp"

namespace pkan {

enum class Family { p_kan, p_mlp, kan_pf, mlp_pf };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::p_kan:
      return "p_kan";
    case Family::p_mlp:
      return "p_mlp";
    case Family::kan_pf:
      return "kan_pf";
    case Family::mlp_pf:
      return "mlp_pf";
  }
  return "p_kan";
}

inline Family parse_family(std::string_view s) {
  if (s == "p_kan" || s == "p-kan") return Family::p_kan;
  if (s == "p_mlp" || s == "p-mlp") return Family::p_mlp;
  if (s == "kan_pf" || s == "kan-pf") return Family::kan_pf;
  if (s == "mlp_pf" || s == "mlp-pf") return Family::mlp_pf;
  throw InvalidArgument("unknown model family '" + std::string(s) + "'");
}

inline bool is_kan(Family f) { return f == Family::p_kan || f == Family::kan_pf; }
inline bool is_point(Family f) { return f == Family::kan_pf || f == Family::mlp_pf; }

inline constexpr double kSigmaFloor = 1e-6;
// 2 + softplus(x) rounds to exactly 2 once x < -36 or so
inline constexpr double kNuFloor = 1e-6;

struct ModelConfig {
  Family family = Family::p_kan;
  Likelihood likelihood = Likelihood::gaussian;
  std::size_t context = 168;
  std::size_t horizon = 24;
  std::vector<std::size_t> hidden_sizes = {46, 10};
  int spline_order = 3;
  std::size_t num_basis = 8;
  double grid_min = -3.0;
  double grid_max = 3.0;
  std::uint64_t seed = 0;

  /// Default widths per family: KAN trunk 46 -> 10, MLP trunk 512 -> 256 -> 128.
  static ModelConfig defaults(Family family, Likelihood likelihood) {
    ModelConfig c;
    c.family = family;
    c.likelihood = is_point(family) ? Likelihood::none : likelihood;
    c.hidden_sizes = is_kan(family) ? std::vector<std::size_t>{46, 10} : std::vector<std::size_t>{512, 256, 128};
    return c;
  }

  std::size_t num_heads() const {
    switch (likelihood) {
      case Likelihood::gaussian:
        return 2;
      case Likelihood::student_t:
        return 3;
      case Likelihood::none:
        return 1;
    }
    return 1;
  }

  SplineSpec spline() const { return SplineSpec(spline_order, num_basis, grid_min, grid_max); }

  /// Short label such as "p_kan_gaussian" or "kan_pf".
  std::string label() const {
    return is_point(family) ? to_string(family) : to_string(family) + "_" + to_string(likelihood);
  }

  void validate() const {
    if (context == 0 || horizon == 0) throw InvalidArgument("ModelConfig: context and horizon must be positive");
    if (is_point(family) != (likelihood == Likelihood::none)) {
      throw InvalidArgument("ModelConfig: likelihood must be none exactly for point-forecast families");
    }
    for (auto w : hidden_sizes) {
      if (w == 0) throw InvalidArgument("ModelConfig: hidden sizes must be positive");
    }
    if (is_kan(family)) (void)spline();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Edge functions phi_{t,i} for every (output t, input i); no bias term.
/// Storage is input-major so the layer evaluates as two matrix products.
struct KanLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  SplineSpec spec;
  Tensor base_weight;   // w,   [n_in, n_out]
  Tensor spline_scale;  // s,   [n_in, n_out]
  Tensor coefficients;  // c_r, [n_in, R, n_out]

  KanLayer() = default;
  KanLayer(std::size_t in, std::size_t out, SplineSpec s)
      : n_in(in),
        n_out(out),
        spec(std::move(s)),
        base_weight(Tensor::zeros({in, out})),
        spline_scale(Tensor::zeros({in, out})),
        coefficients(Tensor::zeros({in, spec.num_basis(), out})) {}

  ConnectionParams edge(std::size_t out, std::size_t in) const {
    ConnectionParams p;
    p.w = base_weight[in * n_out + out];
    p.s = spline_scale[in * n_out + out];
    p.c.resize(spec.num_basis());
    for (std::size_t r = 0; r < p.c.size(); ++r) p.c[r] = coefficients[(in * spec.num_basis() + r) * n_out + out];
    return p;
  }

  void set_edge(std::size_t out, std::size_t in, const ConnectionParams& p) {
    if (p.c.size() != spec.num_basis()) throw InvalidArgument("KanLayer::set_edge: coefficient count mismatch");
    base_weight[in * n_out + out] = p.w;
    spline_scale[in * n_out + out] = p.s;
    for (std::size_t r = 0; r < p.c.size(); ++r) coefficients[(in * spec.num_basis() + r) * n_out + out] = p.c[r];
  }

  static std::size_t count(std::size_t in, std::size_t out, std::size_t num_basis) {
    return out * in * (num_basis + 2);
  }
};

enum class Activation { silu, identity };

/// Dense layer. `weight` is stored transposed, [n_in, n_out], so y = act(x W + b).
struct MlpLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::silu;

  MlpLayer() = default;
  MlpLayer(std::size_t in, std::size_t out, Activation act)
      : n_in(in), n_out(out), weight(Tensor::zeros({in, out})), bias(Tensor::zeros({out})), activation(act) {}

  static std::size_t count(std::size_t in, std::size_t out) { return out * (in + 1); }
};

using Layer = std::variant<KanLayer, MlpLayer>;

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// Gaussian heads leave `nu` empty.
struct DistributionParams {
  Likelihood family = Likelihood::gaussian;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> nu;

  PredictiveDistribution at(std::size_t step) const {
    return family == Likelihood::student_t ? PredictiveDistribution::student_t(mu[step], sigma[step], nu[step])
                                           : PredictiveDistribution::gaussian(mu[step], sigma[step]);
  }
};

struct PointForecast {
  std::vector<double> values;
};

using Forecast = std::variant<DistributionParams, PointForecast>;

struct ModelState {
  ModelConfig config;
  std::vector<Layer> trunk;
  std::vector<Layer> heads;  // mu, sigma[, nu] or the single point head
  Standardizer standardizer;

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    auto collect = [&out](Layer& layer) {
      if (auto* k = std::get_if<KanLayer>(&layer)) {
        out.insert(out.end(), {&k->base_weight, &k->spline_scale, &k->coefficients});
      } else {
        auto& m = std::get<MlpLayer>(layer);
        out.insert(out.end(), {&m.weight, &m.bias});
      }
    };
    for (auto& l : trunk) collect(l);
    for (auto& l : heads) collect(l);
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    auto ptrs = const_cast<ModelState*>(this)->parameters();
    return {ptrs.begin(), ptrs.end()};
  }

  /// Trainable parameters concatenated in `parameters()` order.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    for (const Tensor* t : parameters()) flat.insert(flat.end(), t->values().begin(), t->values().end());
    return flat;
  }

  void assign(std::span<const double> flat) {
    std::size_t offset = 0;
    auto params = parameters();
    std::size_t total = 0;
    for (const Tensor* t : params) total += t->size();
    if (flat.size() != total) throw InvalidArgument("ModelState::assign: parameter count mismatch");
    for (Tensor* t : params) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                flat.begin() + static_cast<std::ptrdiff_t>(offset + t->size()), t->data());
      offset += t->size();
    }
  }
};

/// Exact trainable scalar count of the architecture described by `config`.
inline std::size_t count_parameters(const ModelConfig& config) {
  config.validate();
  std::size_t total = 0;
  std::size_t width = config.context;
  const bool kan = is_kan(config.family);
  auto layer = [&](std::size_t in, std::size_t out) {
    return kan ? KanLayer::count(in, out, config.num_basis) : MlpLayer::count(in, out);
  };
  for (auto h : config.hidden_sizes) {
    total += layer(width, h);
    width = h;
  }
  total += config.num_heads() * layer(width, config.horizon);
  return total;
}

/// Fresh model with seeded initialization.
/// KAN edges: w ~ N(0, 1/sqrt(n_in)), s = 1, c_r ~ N(0, 0.1).
/// MLP: Kaiming-uniform fan-in weights U(-sqrt(6/n_in), sqrt(6/n_in)), zero bias.
inline ModelState init_model(const ModelConfig& config) {
  config.validate();
  ModelState model;
  model.config = config;
  std::mt19937_64 rng(config.seed);
  const bool kan = is_kan(config.family);

  auto make_layer = [&](std::size_t in, std::size_t out, Activation act) -> Layer {
    if (kan) {
      KanLayer layer(in, out, config.spline());
      std::normal_distribution<double> w_dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
      std::normal_distribution<double> c_dist(0.0, 0.1);
      for (double& v : layer.base_weight.values()) v = w_dist(rng);
      layer.spline_scale.fill(1.0);
      for (double& v : layer.coefficients.values()) v = c_dist(rng);
      return layer;
    }
    MlpLayer layer(in, out, act);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : layer.weight.values()) v = dist(rng);
    return layer;
  };

  std::size_t width = config.context;
  for (auto h : config.hidden_sizes) {
    model.trunk.push_back(make_layer(width, h, Activation::silu));
    width = h;
  }
  for (std::size_t i = 0; i < config.num_heads(); ++i) {
    model.heads.push_back(make_layer(width, config.horizon, Activation::identity));
  }
  return model;
}

/// Output of the heads in standardized units; `nu` and `point` are set only when applicable.
struct HeadOutputs {
  Var mu;
  Var sigma;
  Var nu;
  Var point;
};

/// sum_i phi_{t,i}(x_i) for a batch x of shape [B, n_in] (or a single vector [n_in]).
inline Var kan_layer_forward(const KanLayer& layer, const Var& base_weight, const Var& spline_scale,
                             const Var& coefficients, const Var& x) {
  const bool single = x.shape().size() == 1;
  const Var batch = single ? reshape(x, {1, x.shape()[0]}) : x;
  if (batch.shape().size() != 2 || batch.shape()[1] != layer.n_in) {
    throw ShapeError("kan_layer_forward", shape_string(x.shape()), "[B, " + std::to_string(layer.n_in) + "]");
  }
  const std::size_t b = batch.shape()[0];
  const std::size_t big_r = layer.spec.num_basis();
  const Var base = matmul(silu(batch), base_weight);
  const Var basis = spline_basis(layer.spec, clamp(batch, layer.spec.grid_min(), layer.spec.grid_max()));
  const Var scaled = coefficients * reshape(spline_scale, {layer.n_in, 1, layer.n_out});
  const Var spline = matmul(reshape(basis, {b, layer.n_in * big_r}), reshape(scaled, {layer.n_in * big_r, layer.n_out}));
  const Var out = base + spline;
  return single ? reshape(out, {layer.n_out}) : out;
}

inline Var kan_layer_forward(const KanLayer& layer, const Var& x) {
  return kan_layer_forward(layer, Var::constant(layer.base_weight), Var::constant(layer.spline_scale),
                           Var::constant(layer.coefficients), x);
}

inline Var mlp_layer_forward(const MlpLayer& layer, const Var& weight, const Var& bias, const Var& x) {
  const bool single = x.shape().size() == 1;
  const Var batch = single ? reshape(x, {1, x.shape()[0]}) : x;
  if (batch.shape().size() != 2 || batch.shape()[1] != layer.n_in) {
    throw ShapeError("mlp_forward", shape_string(x.shape()), "[B, " + std::to_string(layer.n_in) + "]");
  }
  Var out = matmul(batch, weight) + bias;
  if (layer.activation == Activation::silu) out = silu(out);
  return single ? reshape(out, {layer.n_out}) : out;
}

/// Dense stack using the layers' own parameters.
inline Var mlp_forward(std::span<const MlpLayer> layers, const Var& x) {
  Var h = x;
  for (const auto& l : layers) h = mlp_layer_forward(l, Var::constant(l.weight), Var::constant(l.bias), h);
  return h;
}

inline std::size_t parameter_tensor_count(const Layer& layer) {
  return std::holds_alternative<KanLayer>(layer) ? 3 : 2;
}

/// Applies one layer consuming its parameter Vars from `params` starting at `offset`.
inline Var layer_forward(const Layer& layer, std::span<const Var> params, std::size_t& offset, const Var& x) {
  if (const auto* k = std::get_if<KanLayer>(&layer)) {
    Var out = kan_layer_forward(*k, params[offset], params[offset + 1], params[offset + 2], x);
    offset += 3;
    return out;
  }
  const auto& m = std::get<MlpLayer>(layer);
  Var out = mlp_layer_forward(m, params[offset], params[offset + 1], x);
  offset += 2;
  return out;
}

/// Trainable leaves for every parameter tensor, in `ModelState::parameters()` order.
inline std::vector<Var> parameter_vars(const ModelState& model) {
  std::vector<Var> vars;
  for (const Tensor* t : model.parameters()) vars.emplace_back(*t);
  return vars;
}

inline std::vector<Var> constant_vars(const ModelState& model) {
  std::vector<Var> vars;
  for (const Tensor* t : model.parameters()) vars.push_back(Var::constant(*t));
  return vars;
}

/// Full network on standardized inputs x of shape [B, c]. With `check_finite`, throws
/// NonFiniteError naming the first layer (trunk layers first, then heads) that produced a non-finite value.
inline HeadOutputs forward(const ModelState& model, std::span<const Var> params, const Var& x,
                           bool check_finite = false) {
  std::size_t offset = 0;
  std::size_t layer_index = 0;
  auto check = [&](const Var& v) {
    if (check_finite && !v.value().all_finite()) throw NonFiniteError("layer", layer_index);
    ++layer_index;
  };
  Var h = x;
  for (const auto& layer : model.trunk) {
    h = layer_forward(layer, params, offset, h);
    check(h);
  }
  HeadOutputs out;
  if (model.config.likelihood == Likelihood::none) {
    out.point = layer_forward(model.heads[0], params, offset, h);
    check(out.point);
    return out;
  }
  out.mu = layer_forward(model.heads[0], params, offset, h);
  check(out.mu);
  out.sigma = softplus(layer_forward(model.heads[1], params, offset, h)) + kSigmaFloor;
  check(out.sigma);
  if (model.config.likelihood == Likelihood::student_t) {
    out.nu = softplus(layer_forward(model.heads[2], params, offset, h)) + (2.0 + kNuFloor);
    check(out.nu);
  }
  return out;
}

/// Standardized [B, c] input tensor from raw contexts.
inline Tensor standardize_contexts(const ModelState& model, std::span<const std::vector<double>> contexts) {
  const std::size_t c = model.config.context;
  std::vector<double> x;
  x.reserve(contexts.size() * c);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].size() != c) {
      throw ShapeError("predict", "[" + std::to_string(contexts[i].size()) + "]", "[" + std::to_string(c) + "]");
    }
    for (double v : contexts[i]) x.push_back((v - model.standardizer.mean) / model.standardizer.std);
  }
  return Tensor(Shape{contexts.size(), c}, std::move(x));
}

/// Forecasts for a batch of raw (PRB-unit) contexts, de-standardized back to PRB units.
inline std::vector<Forecast> predict_batch(const ModelState& model, std::span<const std::vector<double>> contexts) {
  if (contexts.empty()) return {};
  const auto params = constant_vars(model);
  const Var x = Var::constant(standardize_contexts(model, contexts));
  const HeadOutputs heads = forward(model, params, x, true);
  const std::size_t h = model.config.horizon;
  const double mean = model.standardizer.mean;
  const double scale = model.standardizer.std;
  std::vector<Forecast> out;
  out.reserve(contexts.size());
  for (std::size_t b = 0; b < contexts.size(); ++b) {
    if (model.config.likelihood == Likelihood::none) {
      PointForecast pf;
      for (std::size_t t = 0; t < h; ++t) pf.values.push_back(heads.point.value()[b * h + t] * scale + mean);
      out.emplace_back(std::move(pf));
      continue;
    }
    DistributionParams d;
    d.family = model.config.likelihood;
    for (std::size_t t = 0; t < h; ++t) {
      d.mu.push_back(heads.mu.value()[b * h + t] * scale + mean);
      d.sigma.push_back(heads.sigma.value()[b * h + t] * scale);
      if (d.family == Likelihood::student_t) d.nu.push_back(heads.nu.value()[b * h + t]);
    }
    out.emplace_back(std::move(d));
  }
  return out;
}

inline Forecast predict(const ModelState& model, std::span<const double> context) {
  const std::vector<std::vector<double>> one{std::vector<double>(context.begin(), context.end())};
  return predict_batch(model, one).front();
}

}  // namespace pkan
