#pragma once

// Per-beam glue: fit a model on the training split, then turn its forecasts
// over the test split into evaluation records.

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstddef>
#include <future>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pkan/data.hpp"
#include "pkan/metrics.hpp"
#include "pkan/nets.hpp"
#include "pkan/training.hpp"

namespace pkan {

/// `window`: stride-1 windows lying entirely inside the test split (1 window at the default split).
/// `rolling`: forecast origins every `stride` hours across the test split, contexts from true history.
struct EvalMode {
  enum class Kind { window, rolling };
  Kind kind = Kind::rolling;
  std::size_t stride = 1;

  friend bool operator==(const EvalMode&, const EvalMode&) = default;
};

inline std::string to_string(EvalMode::Kind k) { return k == EvalMode::Kind::window ? "window" : "rolling"; }

inline EvalMode::Kind parse_eval_kind(std::string_view s) {
  if (s == "window") return EvalMode::Kind::window;
  if (s == "rolling") return EvalMode::Kind::rolling;
  throw InvalidArgument("unknown evaluation mode '" + std::string(s) + "'");
}

/// Initializes from `config`, fits the standardizer on the training split and trains on its windows.
inline TrainResult fit_beam(const ModelConfig& config, const TrainConfig& train_config, const TimeSeries& series,
                            const SplitSpec& split_spec) {
  const Split parts = split(series, split_spec);
  ModelState model = init_model(config);
  model.standardizer = fit_standardizer(parts.train);
  const auto windows = make_windows(parts.train, config.context, config.horizon);
  return train(std::move(model), windows, train_config);
}

inline std::vector<Window> evaluation_windows(const TimeSeries& series, const SplitSpec& split_spec,
                                              std::size_t context, std::size_t horizon, const EvalMode& mode) {
  const Split parts = split(series, split_spec);
  if (mode.kind == EvalMode::Kind::window) return make_windows(parts.test, context, horizon);
  return make_rolling_windows(series, split_spec.train_hours, split_spec.test_hours, context, horizon, mode.stride);
}

/// One record per forecast step, in window order then horizon order.
inline std::vector<EvalRecord> forecast_records(const ModelState& model, const TimeSeries& series,
                                                const SplitSpec& split_spec, const EvalMode& mode) {
  const auto windows = evaluation_windows(series, split_spec, model.config.context, model.config.horizon, mode);
  std::vector<std::vector<double>> contexts;
  contexts.reserve(windows.size());
  for (const auto& w : windows) contexts.push_back(w.context);
  const auto forecasts = predict_batch(model, contexts);
  std::vector<EvalRecord> records;
  records.reserve(windows.size() * model.config.horizon);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t t = 0; t < model.config.horizon; ++t) {
      EvalRecord r;
      r.y = windows[i].target[t];
      r.beam_id = series.beam_id;
      r.timestamp = windows[i].origin + std::chrono::hours(static_cast<long>(t));
      if (const auto* d = std::get_if<DistributionParams>(&forecasts[i])) {
        r.forecast = d->at(t);
      } else {
        r.forecast = std::get<PointForecast>(forecasts[i]).values[t];
      }
      records.push_back(std::move(r));
    }
  }
  return records;
}

/// Runs `job(i)` for i in [0, n) on up to `workers` threads; results keep index order.
template <class Job>
auto parallel_map(std::size_t n, std::size_t workers, Job job) -> std::vector<decltype(job(std::size_t{}))> {
  using Result = decltype(job(std::size_t{}));
  std::vector<Result> results(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = job(i);
    return results;
  }
  std::vector<std::future<void>> pending;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pending.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          results[i] = job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    }));
  }
  for (auto& f : pending) f.get();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

inline std::size_t default_workers() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

}  // namespace pkan
