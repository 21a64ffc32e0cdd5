#pragma once

// Point accuracy (w.r.t. the predictive median) and probabilistic calibration
// metrics over collections of per-step evaluation records.
//
// Cov_a is one-sided: the fraction of truths at or below the predicted a-quantile.
// FIC_a is central: the fraction of truths inside [q_{(1-a)/2}, q_{(1+a)/2}].

#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pkan/data.hpp"
#include "pkan/error.hpp"
#include "pkan/likelihood.hpp"

namespace pkan {

struct EvalRecord {
  double y = 0.0;
  std::variant<PredictiveDistribution, double> forecast;
  std::string beam_id;
  Timestamp timestamp;

  bool is_point() const { return std::holds_alternative<double>(forecast); }
  const PredictiveDistribution& distribution() const { return std::get<PredictiveDistribution>(forecast); }

  /// Predictive median, or the raw value for point forecasts.
  double median() const { return is_point() ? std::get<double>(forecast) : quantile(distribution(), 0.5); }
};

struct PointMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
};

inline void require_records(std::span<const EvalRecord> records, const char* what) {
  if (records.empty()) throw InvalidArgument(std::string(what) + ": no evaluation records");
}

inline void require_distributions(std::span<const EvalRecord> records, const char* what) {
  require_records(records, what);
  for (const auto& r : records) {
    if (r.is_point()) throw InvalidArgument(std::string(what) + ": point forecasts have no predictive distribution");
  }
}

inline PointMetrics point_metrics(std::span<const EvalRecord> records) {
  require_records(records, "point_metrics");
  double se = 0.0;
  double ae = 0.0;
  for (const auto& r : records) {
    const double e = r.y - r.median();
    se += e * e;
    ae += std::abs(e);
  }
  const double n = static_cast<double>(records.size());
  PointMetrics m;
  m.mse = se / n;
  m.mae = ae / n;
  m.rmse = std::sqrt(m.mse);
  return m;
}

/// Mean pinball loss of the predicted alpha-quantile.
inline double quantile_loss(std::span<const EvalRecord> records, double alpha) {
  require_distributions(records, "quantile_loss");
  double total = 0.0;
  for (const auto& r : records) total += pinball(quantile(r.distribution(), alpha), r.y, alpha);
  return total / static_cast<double>(records.size());
}

inline double coverage(std::span<const EvalRecord> records, double alpha) {
  require_distributions(records, "coverage");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.y <= quantile(r.distribution(), alpha) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline double fic(std::span<const EvalRecord> records, double alpha) {
  require_distributions(records, "fic");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("fic: alpha must lie in (0, 1)");
  std::size_t hits = 0;
  for (const auto& r : records) {
    const double lo = quantile(r.distribution(), 0.5 * (1.0 - alpha));
    const double hi = quantile(r.distribution(), 0.5 * (1.0 + alpha));
    hits += (lo <= r.y && r.y <= hi) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline double crps_mean(std::span<const EvalRecord> records) {
  require_distributions(records, "crps_mean");
  double total = 0.0;
  for (const auto& r : records) total += crps(r.distribution(), r.y);
  return total / static_cast<double>(records.size());
}

inline constexpr std::array<double, 3> kMetricLevels = {0.1, 0.5, 0.9};

struct MetricsReport {
  std::string model;
  std::string beam;
  std::size_t count = 0;
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  // Absent for point-forecast models.
  std::optional<double> crps;
  std::array<std::optional<double>, 3> ql;
  std::array<std::optional<double>, 3> cov;
  std::array<std::optional<double>, 3> fic;

  bool probabilistic() const { return crps.has_value(); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["beam"] = beam;
    j["count"] = count;
    j["mse"] = mse;
    j["mae"] = mae;
    j["rmse"] = rmse;
    if (probabilistic()) {
      j["crps"] = *crps;
      for (std::size_t i = 0; i < kMetricLevels.size(); ++i) j["ql_" + level_name(i)] = *ql[i];
      for (std::size_t i = 0; i < kMetricLevels.size(); ++i) j["cov_" + level_name(i)] = *cov[i];
      for (std::size_t i = 0; i < kMetricLevels.size(); ++i) j["fic_" + level_name(i)] = *fic[i];
    }
    return j;
  }

  static std::string csv_header() {
    std::string h = "model,beam,count,mse,mae,rmse,crps";
    for (const char* group : {"ql", "cov", "fic"}) {
      for (std::size_t i = 0; i < kMetricLevels.size(); ++i) h += std::string(",") + group + "_" + level_name(i);
    }
    return h;
  }

  /// Probabilistic columns are left empty for point-forecast rows.
  std::string csv_row() const {
    std::string row = model + "," + beam + "," + std::to_string(count) + "," + format_double(mse) + "," +
                      format_double(mae) + "," + format_double(rmse) + ",";
    if (crps) row += format_double(*crps);
    for (const auto* group : {&ql, &cov, &fic}) {
      for (const auto& v : *group) {
        row += ",";
        if (v) row += format_double(*v);
      }
    }
    return row;
  }

  static std::string level_name(std::size_t i) {
    static const std::array<const char*, 3> names = {"0.1", "0.5", "0.9"};
    return names[i];
  }
};

inline MetricsReport evaluate_records(std::span<const EvalRecord> records, std::string model = {},
                                      std::string beam = {}) {
  require_records(records, "evaluate_records");
  MetricsReport report;
  report.model = std::move(model);
  report.beam = std::move(beam);
  report.count = records.size();
  const PointMetrics pm = point_metrics(records);
  report.mse = pm.mse;
  report.mae = pm.mae;
  report.rmse = pm.rmse;
  const bool probabilistic = !records.front().is_point();
  for (const auto& r : records) {
    if (r.is_point() == probabilistic) throw InvalidArgument("evaluate_records: mixed point and distribution records");
  }
  if (probabilistic) {
    report.crps = crps_mean(records);
    for (std::size_t i = 0; i < kMetricLevels.size(); ++i) {
      report.ql[i] = quantile_loss(records, kMetricLevels[i]);
      report.cov[i] = coverage(records, kMetricLevels[i]);
      report.fic[i] = fic(records, kMetricLevels[i]);
    }
  }
  return report;
}

}  // namespace pkan
