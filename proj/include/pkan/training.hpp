#pragma once

// NLL / MSE losses and the Adam training loop. Losses are computed in
// standardized space and averaged over window-steps, which rescales the summed
// NLL by the constant 1 / (num_windows * h).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "pkan/autodiff.hpp"
#include "pkan/data.hpp"
#include "pkan/error.hpp"
#include "pkan/likelihood.hpp"
#include "pkan/nets.hpp"
#include "pkan/serialize.hpp"

namespace pkan {

struct TrainConfig {
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 0;  // 0 = full batch
  bool shuffle = false;
  std::uint64_t seed = 0;
  std::optional<double> gradient_clip_norm = 10.0;

  void validate() const {
    if (epochs == 0) throw InvalidArgument("TrainConfig: epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw InvalidArgument("TrainConfig: Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw InvalidArgument("TrainConfig: epsilon must be positive");
    if (gradient_clip_norm && !(*gradient_clip_norm > 0.0)) {
      throw InvalidArgument("TrainConfig: gradient_clip_norm must be positive");
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainLog {
  std::vector<double> loss;
  std::vector<double> seconds;
  std::uint32_t checksum = 0;  // CRC-32 of the final parameter vector

  /// `epoch,loss,seconds`; loss uses shortest round-trip formatting.
  void write_csv(std::ostream& out) const {
    out << "epoch,loss,seconds\n";
    for (std::size_t e = 0; e < loss.size(); ++e) {
      out << e + 1 << ',' << format_double(loss[e]) << ',' << format_double(seconds[e]) << '\n';
    }
  }
};

/// Training produced a non-finite loss. Carries the parameters from before the failing epoch.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::shared_ptr<const ModelState> checkpoint, TrainLog log,
                  const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) + ": " + detail),
        epoch_(epoch),
        checkpoint_(std::move(checkpoint)),
        log_(std::move(log)) {}

  std::size_t epoch() const noexcept { return epoch_; }
  const ModelState& checkpoint() const { return *checkpoint_; }
  const TrainLog& log() const noexcept { return log_; }

 private:
  std::size_t epoch_;
  std::shared_ptr<const ModelState> checkpoint_;
  TrainLog log_;
};

/// Standardized inputs [B, c] and targets [B, h].
struct Batch {
  Tensor x;
  Tensor y;
};

inline Batch make_batch(const ModelState& model, std::span<const Window> windows) {
  if (windows.empty()) throw InvalidArgument("loss: windows must be nonempty");
  const std::size_t c = model.config.context;
  const std::size_t h = model.config.horizon;
  const double mean = model.standardizer.mean;
  const double scale = model.standardizer.std;
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(windows.size() * c);
  y.reserve(windows.size() * h);
  for (const auto& w : windows) {
    if (w.context.size() != c || w.target.size() != h) {
      throw ShapeError("loss", "[" + std::to_string(w.context.size()) + ", " + std::to_string(w.target.size()) + "]",
                       "[" + std::to_string(c) + ", " + std::to_string(h) + "]");
    }
    for (double v : w.context) x.push_back((v - mean) / scale);
    for (double v : w.target) y.push_back((v - mean) / scale);
  }
  return {Tensor(Shape{windows.size(), c}, std::move(x)), Tensor(Shape{windows.size(), h}, std::move(y))};
}

namespace detail {

inline void check_rows_finite(const Tensor& per_element, std::size_t h) {
  for (std::size_t i = 0; i < per_element.size(); ++i) {
    if (!std::isfinite(per_element[i])) throw NonFiniteError("loss of window", i / h);
  }
}

}  // namespace detail

/// Mean over window-steps of -log p(y | context) in standardized space.
inline Var nll_loss(const ModelState& model, std::span<const Var> params, const Batch& batch) {
  if (model.config.likelihood == Likelihood::none) throw InvalidArgument("nll_loss: model has no likelihood head");
  const HeadOutputs heads = forward(model, params, Var::constant(batch.x));
  const Var y = Var::constant(batch.y);
  const Var nu = model.config.likelihood == Likelihood::student_t ? heads.nu : Var::constant(0.0);
  const Var logp = log_pdf(model.config.likelihood, heads.mu, heads.sigma, nu, y);
  detail::check_rows_finite(logp.value(), model.config.horizon);
  return -mean(logp);
}

inline Var nll_loss(const ModelState& model, std::span<const Var> params, std::span<const Window> windows) {
  return nll_loss(model, params, make_batch(model, windows));
}

/// Mean squared error over window-steps in standardized space (point heads).
inline Var mse_loss(const ModelState& model, std::span<const Var> params, const Batch& batch) {
  if (model.config.likelihood != Likelihood::none) throw InvalidArgument("mse_loss: model has no point head");
  const HeadOutputs heads = forward(model, params, Var::constant(batch.x));
  const Var err = square(heads.point - Var::constant(batch.y));
  detail::check_rows_finite(err.value(), model.config.horizon);
  return mean(err);
}

inline Var mse_loss(const ModelState& model, std::span<const Var> params, std::span<const Window> windows) {
  return mse_loss(model, params, make_batch(model, windows));
}

/// NLL for probabilistic models, MSE for point models.
inline Var training_loss(const ModelState& model, std::span<const Var> params, const Batch& batch) {
  return model.config.likelihood == Likelihood::none ? mse_loss(model, params, batch) : nll_loss(model, params, batch);
}

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState for_parameters(std::span<Tensor* const> params) {
    AdamState s;
    for (const Tensor* p : params) {
      s.m.push_back(Tensor::zeros(p->shape()));
      s.v.push_back(Tensor::zeros(p->shape()));
    }
    return s;
  }
};

inline double global_norm(std::span<const Tensor> grads) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double e : g.values()) ss += e * e;
  }
  return std::sqrt(ss);
}

/// One bias-corrected Adam update, after optional global-norm clipping of `grads`.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and state counts differ");
  }
  double scale = 1.0;
  if (config.gradient_clip_norm) {
    const double norm = global_norm(grads);
    if (norm > *config.gradient_clip_norm) scale = *config.gradient_clip_norm / norm;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) throw ShapeError("adam_step", shape_string(p.shape()), shape_string(g.shape()));
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] * scale;
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

struct TrainResult {
  ModelState model;
  TrainLog log;
};

/// Trains `model` (already carrying its standardizer) on `windows`. Deterministic for a fixed seed.
inline TrainResult train(ModelState model, std::span<const Window> windows, const TrainConfig& config) {
  config.validate();
  if (windows.empty()) throw InvalidArgument("train: no training windows");
  std::vector<Tensor*> params = model.parameters();
  AdamState adam = AdamState::for_parameters(params);
  TrainLog log;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size =
      config.batch_size == 0 ? windows.size() : std::min(config.batch_size, windows.size());
  std::optional<Batch> full;
  if (batch_size == windows.size() && !config.shuffle) full = make_batch(model, windows);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    auto checkpoint = std::make_shared<const ModelState>(model);
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, windows.size());
      Batch batch;
      if (full) {
        batch = *full;
      } else {
        std::vector<Window> chunk;
        for (std::size_t i = begin; i < end; ++i) chunk.push_back(windows[order[i]]);
        batch = make_batch(model, chunk);
      }
      std::vector<Var> vars = parameter_vars(model);
      Var loss;
      try {
        loss = training_loss(model, vars, batch);
      } catch (const NonFiniteError& e) {
        const std::size_t window = full ? e.index() : order[begin + e.index()];
        throw DivergenceError(epoch, checkpoint, log, "non-finite loss on window " + std::to_string(window));
      }
      if (!std::isfinite(loss.item())) throw DivergenceError(epoch, checkpoint, log, "non-finite loss");
      backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(vars.size());
      for (auto& v : vars) grads.push_back(v.grad());
      for (const auto& g : grads) {
        if (!g.all_finite()) throw DivergenceError(epoch, checkpoint, log, "non-finite gradient");
      }
      adam_step(params, grads, adam, config);
      epoch_loss += loss.item() * static_cast<double>(end - begin);
    }
    log.loss.push_back(epoch_loss / static_cast<double>(windows.size()));
    log.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }
  log.checksum = parameter_checksum(model);
  return {std::move(model), std::move(log)};
}

}  // namespace pkan
