#pragma once

// Dynamic thresholding of PRB allocations and the efficiency / risk
// decomposition against a static maximum budget M.
//
// Per step, with demand y_t rounded to whole PRBs and allocation A_t in [0, M]:
//   saved = M - A_t, overprov = max(0, A_t - y_t), served = min(A_t, y_t),
//   underprov = max(0, y_t - A_t)
// so saved + overprov + served = M holds exactly in integer arithmetic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pkan/data.hpp"
#include "pkan/error.hpp"
#include "pkan/likelihood.hpp"
#include "pkan/metrics.hpp"

namespace pkan {

enum class PolicyKind { static_max, dynamic_quantile, point };

struct ThresholdPolicy {
  PolicyKind kind = PolicyKind::dynamic_quantile;
  double quantile = 0.99;

  static ThresholdPolicy static_max() { return {PolicyKind::static_max, 0.99}; }
  static ThresholdPolicy dynamic(double p = 0.99) { return {PolicyKind::dynamic_quantile, p}; }
  static ThresholdPolicy point() { return {PolicyKind::point, 0.99}; }

  void validate() const {
    if (!(quantile > 0.0 && quantile < 1.0)) throw InvalidArgument("ThresholdPolicy: quantile must lie in (0, 1)");
  }

  std::string label() const {
    switch (kind) {
      case PolicyKind::static_max:
        return "static_max";
      case PolicyKind::point:
        return "point";
      case PolicyKind::dynamic_quantile:
        break;
    }
    return "p" + format_double(quantile * 100.0);
  }

  friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

/// Static budget: maximum training-period demand rounded up to whole PRBs.
inline std::int64_t static_budget(const TimeSeries& train) {
  if (train.values.empty()) throw DataError("static_budget: empty training series");
  return static_cast<std::int64_t>(std::ceil(*std::max_element(train.values.begin(), train.values.end())));
}

struct AllocationStep {
  std::int64_t demand = 0;
  std::int64_t allocation = 0;
  std::int64_t saved = 0;
  std::int64_t overprovisioned = 0;
  std::int64_t served = 0;
  std::int64_t underprovisioned = 0;
};

struct AllocationReport {
  std::string label;
  std::int64_t budget = 0;  // M (0 for pooled reports over beams with different budgets)
  std::vector<AllocationStep> steps;
  // Totals in PRB-hours. capacity = sum of M over steps.
  std::int64_t capacity = 0;
  std::int64_t saved = 0;
  std::int64_t overprovisioned = 0;
  std::int64_t served = 0;
  std::int64_t underprovisioned = 0;
  std::int64_t demand = 0;
  std::size_t underprov_events = 0;

  double savings_frac() const { return ratio(saved, capacity); }
  double overprov_frac() const { return ratio(overprovisioned, capacity); }
  double served_frac() const { return ratio(served, capacity); }
  /// Unserved demand mass over total demand.
  double underprov_frac() const { return ratio(underprovisioned, demand); }
  /// Savings relative to total demand instead of the static budget.
  double savings_frac_of_demand() const { return ratio(saved, demand); }
  double underprov_event_rate() const {
    return steps_count() == 0 ? 0.0 : static_cast<double>(underprov_events) / static_cast<double>(steps_count());
  }
  std::size_t steps_count() const { return steps.size(); }

  bool budget_identity_holds() const {
    if (saved + overprovisioned + served != capacity) return false;
    if (budget > 0 && capacity != budget * static_cast<std::int64_t>(steps.size())) return false;
    return std::all_of(steps.begin(), steps.end(), [this](const AllocationStep& s) {
      return budget <= 0 || s.saved + s.overprovisioned + s.served == budget;
    });
  }

  void add(const AllocationStep& s, std::int64_t step_budget) {
    steps.push_back(s);
    capacity += step_budget;
    saved += s.saved;
    overprovisioned += s.overprovisioned;
    served += s.served;
    underprovisioned += s.underprovisioned;
    demand += s.demand;
    underprov_events += s.underprovisioned > 0 ? 1 : 0;
  }

  nlohmann::ordered_json to_json(bool include_steps = false) const {
    nlohmann::ordered_json j;
    j["label"] = label;
    j["budget"] = budget;
    j["steps"] = steps.size();
    j["capacity"] = capacity;
    j["saved"] = saved;
    j["overprovisioned"] = overprovisioned;
    j["served"] = served;
    j["underprovisioned"] = underprovisioned;
    j["demand"] = demand;
    j["savings_frac"] = savings_frac();
    j["overprov_frac"] = overprov_frac();
    j["served_frac"] = served_frac();
    j["underprov_frac"] = underprov_frac();
    j["underprov_event_rate"] = underprov_event_rate();
    j["savings_frac_of_demand"] = savings_frac_of_demand();
    j["budget_identity"] = budget_identity_holds();
    if (include_steps) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& s : steps) {
        arr.push_back({{"y", s.demand}, {"allocation", s.allocation}, {"saved", s.saved},
                       {"overprov", s.overprovisioned}, {"underprov", s.underprovisioned}});
      }
      j["per_step"] = arr;
    }
    return j;
  }

  /// `step,y,allocation,saved,overprov,underprov`.
  void write_steps_csv(std::ostream& out) const {
    out << "step,y,allocation,saved,overprov,underprov\n";
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& s = steps[t];
      out << t << ',' << s.demand << ',' << s.allocation << ',' << s.saved << ',' << s.overprovisioned << ','
          << s.underprovisioned << '\n';
    }
  }

 private:
  static double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  }
};

inline AllocationStep allocation_step(std::int64_t demand, std::int64_t allocation, std::int64_t budget) {
  AllocationStep s;
  s.demand = demand;
  s.allocation = allocation;
  s.saved = budget - allocation;
  s.overprovisioned = std::max<std::int64_t>(0, allocation - demand);
  s.served = std::min(allocation, demand);
  s.underprovisioned = std::max<std::int64_t>(0, demand - allocation);
  return s;
}

/// Whole-PRB threshold for one record under `policy`, capped to [0, budget].
inline std::int64_t threshold(const ThresholdPolicy& policy, const EvalRecord& record, std::int64_t budget) {
  double level = 0.0;
  switch (policy.kind) {
    case PolicyKind::static_max:
      return budget;
    case PolicyKind::point:
      level = record.median();
      break;
    case PolicyKind::dynamic_quantile:
      if (record.is_point()) throw InvalidArgument("allocate: dynamic thresholds need a predictive distribution");
      level = quantile(record.distribution(), policy.quantile);
      break;
  }
  const double capped = std::clamp(std::ceil(level), 0.0, static_cast<double>(budget));
  return static_cast<std::int64_t>(capped);
}

inline AllocationReport allocate(const ThresholdPolicy& policy, std::span<const EvalRecord> records,
                                 std::int64_t budget, std::string label = {}) {
  policy.validate();
  if (budget <= 0) throw InvalidArgument("allocate: static budget M must be positive");
  AllocationReport report;
  report.label = std::move(label);
  report.budget = budget;
  report.steps.reserve(records.size());
  for (const auto& r : records) {
    const auto demand = static_cast<std::int64_t>(std::llround(r.y));
    report.add(allocation_step(demand, threshold(policy, r, budget), budget), budget);
  }
  return report;
}

/// Sum of several reports (e.g. over beams); per-step rows are concatenated.
inline AllocationReport pool(std::span<const AllocationReport> reports, std::string label) {
  AllocationReport out;
  out.label = std::move(label);
  for (const auto& r : reports) {
    for (const auto& s : r.steps) out.add(s, r.budget);
  }
  return out;
}

enum class RiskMetric { mass_fraction, event_rate };

struct ParetoPoint {
  std::string label;
  double savings_frac = 0.0;
  double underprov_frac = 0.0;
  double underprov_event_rate = 0.0;
  bool dominated = false;
};

/// Points sorted by savings (descending, ties by label). A point is dominated when another
/// has savings >= and risk <= with at least one strict inequality.
inline std::vector<ParetoPoint> pareto(std::span<const AllocationReport> reports,
                                       RiskMetric risk = RiskMetric::mass_fraction) {
  std::vector<ParetoPoint> points;
  for (const auto& r : reports) {
    points.push_back({r.label, r.savings_frac(), r.underprov_frac(), r.underprov_event_rate(), false});
  }
  std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.savings_frac != b.savings_frac) return a.savings_frac > b.savings_frac;
    return a.label < b.label;
  });
  auto risk_of = [risk](const ParetoPoint& p) {
    return risk == RiskMetric::mass_fraction ? p.underprov_frac : p.underprov_event_rate;
  };
  // After sorting, only earlier points (savings >=) can dominate; track the best risk so far
  // among strictly-higher-savings points and handle equal-savings groups explicitly.
  std::size_t i = 0;
  double best_risk_above = std::numeric_limits<double>::infinity();
  while (i < points.size()) {
    std::size_t j = i;
    double group_min = std::numeric_limits<double>::infinity();
    while (j < points.size() && points[j].savings_frac == points[i].savings_frac) {
      group_min = std::min(group_min, risk_of(points[j]));
      ++j;
    }
    for (std::size_t k = i; k < j; ++k) {
      const double rk = risk_of(points[k]);
      points[k].dominated = best_risk_above <= rk || group_min < rk;
    }
    best_risk_above = std::min(best_risk_above, group_min);
    i = j;
  }
  return points;
}

inline void write_pareto_csv(std::ostream& out, std::span<const ParetoPoint> points) {
  out << "label,savings_frac,underprov_frac,underprov_event_rate,dominated\n";
  for (const auto& p : points) {
    out << p.label << ',' << format_double(p.savings_frac) << ',' << format_double(p.underprov_frac) << ','
        << format_double(p.underprov_event_rate) << ',' << (p.dominated ? 1 : 0) << '\n';
  }
}

}  // namespace pkan
