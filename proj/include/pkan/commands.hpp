#pragma once

// The five subcommands over a RunConfig. Each writes its artifacts under the
// configured directories and returns what it wrote so callers can inspect it.
//
// Layout below `out`:
//   data.csv
//   models/<beam>__<label>.pkan, models/<beam>__<label>.log.csv, models/train_summary.csv
//   reports/metrics.{csv,json}
//   reports/allocation.{csv,json}, reports/pareto.csv,
//   reports/allocation/<beam>__<label>.csv, reports/plots/<beam>__<label>.{csv,svg}

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pkan/allocation.hpp"
#include "pkan/config.hpp"
#include "pkan/data.hpp"
#include "pkan/metrics.hpp"
#include "pkan/nets.hpp"
#include "pkan/pipeline.hpp"
#include "pkan/plot.hpp"
#include "pkan/serialize.hpp"
#include "pkan/training.hpp"

namespace pkan {

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::string artifact_stem(const std::string& beam, const std::string& label) { return beam + "__" + label; }

inline std::vector<TimeSeries> load_dataset(const RunConfig& config) {
  const auto path = config.data_path();
  if (!std::filesystem::exists(path)) throw DataError("data file " + path.string() + " does not exist");
  auto beams = load_csv(path);
  if (beams.empty()) throw DataError("data file " + path.string() + " has no rows");
  return beams;
}

inline ModelState load_trained(const RunConfig& config, const std::string& beam, const std::string& label) {
  const auto path = config.models_dir() / (artifact_stem(beam, label) + ".pkan");
  if (!std::filesystem::exists(path)) throw DataError("model file " + path.string() + " does not exist; run train first");
  return load_model(path);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline std::vector<TimeSeries> generate_dataset(const RunConfig& config) {
  std::vector<TimeSeries> beams;
  for (std::size_t b = 0; b < config.dataset.beams; ++b) beams.push_back(generate(config.dataset.for_beam(b, config.seed)));
  return beams;
}

inline std::filesystem::path cmd_generate(const RunConfig& config, std::ostream& log) {
  config.dataset.beam.validate();
  if (config.dataset.beams == 0) throw InvalidArgument("generate: beams must be at least 1");
  const auto beams = generate_dataset(config);
  const auto path = config.data_path();
  auto out = detail::open_output(path);
  write_csv(out, beams);
  log << "wrote " << path.string() << " (" << beams.size() << " beams x " << config.dataset.beam.length_hours
      << " h)\n";
  return path;
}

// ---------------------------------------------------------------------------

struct TrainOutcome {
  std::string beam;
  std::string label;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  std::uint32_t checksum = 0;
  std::optional<std::string> divergence;
};

/// Raised after all jobs ran when at least one of them diverged.
class TrainingFailed : public Error {
 public:
  explicit TrainingFailed(const std::string& what) : Error(what) {}
};

inline std::vector<TrainOutcome> cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto beams = detail::load_dataset(config);
  const std::size_t nv = config.variants.size();
  const auto dir = config.models_dir();
  std::filesystem::create_directories(dir);

  auto outcomes = parallel_map(beams.size() * nv, config.worker_count(), [&](std::size_t job) {
    const std::size_t b = job / nv;
    const ModelConfig mc = config.model_config(config.variants[job % nv], b);
    const TimeSeries& series = beams[b];
    TrainOutcome o;
    o.beam = series.beam_id;
    o.label = mc.label();
    const auto stem = dir / detail::artifact_stem(o.beam, o.label);
    try {
      const TrainResult result = fit_beam(mc, config.train_config(b), series, config.split);
      save_model(result.model, stem.string() + ".pkan");
      auto out = detail::open_output(stem.string() + ".log.csv");
      result.log.write_csv(out);
      o.epochs = result.log.loss.size();
      o.final_loss = result.log.loss.back();
      o.checksum = result.log.checksum;
    } catch (const DivergenceError& e) {
      auto out = detail::open_output(stem.string() + ".log.csv");
      e.log().write_csv(out);
      save_model(e.checkpoint(), stem.string() + ".diverged.pkan");
      o.epochs = e.log().loss.size();
      o.divergence = e.what();
    }
    return o;
  });

  auto summary = detail::open_output(dir / "train_summary.csv");
  summary << "beam,model,epochs,final_loss,checksum,status\n";
  std::optional<std::string> failure;
  for (const auto& o : outcomes) {
    summary << o.beam << ',' << o.label << ',' << o.epochs << ',' << (o.divergence ? "" : format_double(o.final_loss))
            << ',' << (o.divergence ? "" : std::to_string(o.checksum)) << ',' << (o.divergence ? "diverged" : "ok")
            << '\n';
    if (o.divergence) {
      log << o.beam << ' ' << o.label << ": " << *o.divergence << '\n';
      if (!failure) failure = o.beam + " " + o.label + ": " + *o.divergence;
    } else {
      log << o.beam << ' ' << o.label << ": final loss " << format_double(o.final_loss) << ", checksum "
          << o.checksum << '\n';
    }
  }
  if (failure) throw TrainingFailed(*failure);
  return outcomes;
}

// ---------------------------------------------------------------------------

/// Per-beam reports in (variant, beam) order, then one pooled report (beam "all") per variant.
inline std::vector<MetricsReport> cmd_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto beams = detail::load_dataset(config);
  const std::size_t nv = config.variants.size();
  auto per_job = parallel_map(beams.size() * nv, config.worker_count(), [&](std::size_t job) {
    const std::size_t v = job / beams.size();
    const TimeSeries& series = beams[job % beams.size()];
    const std::string label = config.model_config(config.variants[v]).label();
    const ModelState model = detail::load_trained(config, series.beam_id, label);
    return forecast_records(model, series, config.split, config.eval);
  });

  std::vector<MetricsReport> reports;
  for (std::size_t v = 0; v < nv; ++v) {
    const std::string label = config.model_config(config.variants[v]).label();
    std::vector<EvalRecord> pooled;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto& records = per_job[v * beams.size() + b];
      reports.push_back(evaluate_records(records, label, beams[b].beam_id));
      pooled.insert(pooled.end(), records.begin(), records.end());
    }
    reports.push_back(evaluate_records(pooled, label, "all"));
  }

  const auto dir = config.reports_dir();
  if (config.format == OutputFormat::csv) {
    auto out = detail::open_output(dir / "metrics.csv");
    out << MetricsReport::csv_header() << '\n';
    for (const auto& r : reports) out << r.csv_row() << '\n';
  } else {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    auto out = detail::open_output(dir / "metrics.json");
    out << arr.dump(2) << '\n';
  }
  for (const auto& r : reports) {
    if (r.beam != "all") continue;
    log << r.model << ": rmse " << format_double(r.rmse);
    if (r.crps) log << ", crps " << format_double(*r.crps) << ", cov_0.9 " << format_double(*r.cov[2]);
    log << '\n';
  }
  return reports;
}

// ---------------------------------------------------------------------------

struct AllocationRun {
  ThresholdPolicy policy;
  std::vector<std::string> beams;
  std::vector<std::string> labels;               // one per variant, plus "static_max" last
  std::vector<std::vector<AllocationReport>> per_beam;  // [label][beam]
  std::vector<AllocationReport> pooled;          // [label]
  std::vector<ParetoPoint> pareto;

  const AllocationReport& beam_report(const std::string& label, const std::string& beam) const {
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (labels[l] != label) continue;
      for (std::size_t b = 0; b < beams.size(); ++b) {
        if (beams[b] == beam) return per_beam[l][b];
      }
    }
    throw InvalidArgument("no allocation report for " + label + " on " + beam);
  }
  const AllocationReport& pooled_report(const std::string& label) const {
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (labels[l] == label) return pooled[l];
    }
    throw InvalidArgument("no pooled allocation report for " + label);
  }
};

/// Policy actually applied to `variant`: PF models have no quantiles, so a dynamic policy becomes point.
inline ThresholdPolicy effective_policy(const ThresholdPolicy& policy, const Variant& variant) {
  if (policy.kind == PolicyKind::dynamic_quantile && is_point(variant.family)) return ThresholdPolicy::point();
  return policy;
}

inline AllocationRun cmd_allocate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto beams = detail::load_dataset(config);
  const std::size_t nv = config.variants.size();
  const std::size_t nb = beams.size();
  const EvalMode mode{EvalMode::Kind::rolling, config.allocation_stride};

  auto records = parallel_map(nb * nv, config.worker_count(), [&](std::size_t job) {
    const std::string label = config.model_config(config.variants[job / nb]).label();
    const TimeSeries& series = beams[job % nb];
    return forecast_records(detail::load_trained(config, series.beam_id, label), series, config.split, mode);
  });

  AllocationRun run;
  run.policy = config.policy;
  for (const auto& s : beams) run.beams.push_back(s.beam_id);
  std::vector<std::int64_t> budgets;
  for (const auto& s : beams) budgets.push_back(static_budget(split(s, config.split).train));

  const auto dir = config.reports_dir();
  for (std::size_t v = 0; v <= nv; ++v) {
    const bool baseline = v == nv;
    const ThresholdPolicy policy =
        baseline ? ThresholdPolicy::static_max() : effective_policy(config.policy, config.variants[v]);
    const std::string label = baseline ? "static_max" : config.model_config(config.variants[v]).label();
    std::vector<AllocationReport> reports;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& recs = records[(baseline ? 0 : v) * nb + b];
      reports.push_back(allocate(policy, recs, budgets[b], label));
      if (baseline) continue;
      const std::string stem = detail::artifact_stem(beams[b].beam_id, label);
      {
        auto out = detail::open_output(dir / "allocation" / (stem + ".csv"));
        reports.back().write_steps_csv(out);
      }
      const BandSeries band = band_series(beams[b].beam_id + " " + label + " (" + policy.label() + ")", recs, reports.back());
      {
        auto out = detail::open_output(dir / "plots" / (stem + ".csv"));
        write_band_csv(out, band);
      }
      auto svg = detail::open_output(dir / "plots" / (stem + ".svg"));
      write_band_svg(svg, band);
    }
    run.labels.push_back(label);
    run.pooled.push_back(pool(reports, label));
    run.per_beam.push_back(std::move(reports));
  }
  run.pareto = pareto(run.pooled, config.risk);

  {
    auto out = detail::open_output(dir / "pareto.csv");
    write_pareto_csv(out, run.pareto);
  }
  if (config.format == OutputFormat::json) {
    nlohmann::ordered_json j;
    j["policy"] = policy_name(config.policy);
    j["quantile"] = config.policy.quantile;
    j["stride"] = config.allocation_stride;
    auto models = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < run.labels.size(); ++l) {
      nlohmann::ordered_json m;
      m["label"] = run.labels[l];
      m["pooled"] = run.pooled[l].to_json();
      auto per = nlohmann::ordered_json::array();
      for (std::size_t b = 0; b < nb; ++b) {
        auto r = run.per_beam[l][b].to_json();
        r["beam"] = run.beams[b];
        per.push_back(r);
      }
      m["beams"] = per;
      models.push_back(m);
    }
    j["models"] = models;
    auto out = detail::open_output(dir / "allocation.json");
    out << j.dump(2) << '\n';
  } else {
    auto out = detail::open_output(dir / "allocation.csv");
    out << "model,beam,budget,steps,capacity,saved,overprovisioned,served,underprovisioned,demand,savings_frac,"
           "overprov_frac,served_frac,underprov_frac,underprov_event_rate,savings_frac_of_demand,budget_identity\n";
    const auto row = [&](const std::string& beam, const AllocationReport& r) {
      out << r.label << ',' << beam << ',' << r.budget << ',' << r.steps_count() << ',' << r.capacity << ','
          << r.saved << ',' << r.overprovisioned << ',' << r.served << ',' << r.underprovisioned << ',' << r.demand
          << ',' << format_double(r.savings_frac()) << ',' << format_double(r.overprov_frac()) << ','
          << format_double(r.served_frac()) << ',' << format_double(r.underprov_frac()) << ','
          << format_double(r.underprov_event_rate()) << ',' << format_double(r.savings_frac_of_demand()) << ','
          << (r.budget_identity_holds() ? 1 : 0) << '\n';
    };
    for (std::size_t l = 0; l < run.labels.size(); ++l) {
      for (std::size_t b = 0; b < nb; ++b) row(run.beams[b], run.per_beam[l][b]);
      row("all", run.pooled[l]);
    }
  }
  for (const auto& r : run.pooled) {
    log << r.label << ": savings " << format_double(r.savings_frac()) << ", underprov "
        << format_double(r.underprov_frac()) << ", events " << format_double(r.underprov_event_rate()) << '\n';
  }
  return run;
}

// ---------------------------------------------------------------------------

struct ParameterCount {
  std::string model;
  std::vector<std::size_t> hidden;
  std::size_t parameters = 0;
};

inline std::vector<ParameterCount> cmd_count_params(const RunConfig& config, std::ostream& out) {
  config.validate();
  std::vector<ParameterCount> rows;
  for (const auto& v : config.variants) {
    const ModelConfig mc = config.model_config(v);
    rows.push_back({mc.label(), mc.hidden_sizes, count_parameters(mc)});
  }
  const auto widths = [](const std::vector<std::size_t>& h) {
    std::string s;
    for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "-" : "") + std::to_string(h[i]);
    return s;
  };
  if (config.format == OutputFormat::json) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) arr.push_back({{"model", r.model}, {"hidden", r.hidden}, {"parameters", r.parameters}});
    out << arr.dump(2) << '\n';
  } else {
    out << "model,hidden,parameters\n";
    for (const auto& r : rows) out << r.model << ',' << widths(r.hidden) << ',' << r.parameters << '\n';
  }
  return rows;
}

}  // namespace pkan
