#pragma once

// Run configuration: one INI document with sections, read and written with
// boost::property_tree. Doubles are written in shortest round-trip form so a
// written config reads back equal.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "pkan/allocation.hpp"
#include "pkan/data.hpp"
#include "pkan/error.hpp"
#include "pkan/nets.hpp"
#include "pkan/pipeline.hpp"
#include "pkan/training.hpp"

namespace pkan {

/// A trained model kind, e.g. "p_kan:student_t" or "kan_pf".
struct Variant {
  Family family = Family::p_kan;
  Likelihood likelihood = Likelihood::gaussian;

  std::string to_string() const {
    return is_point(family) ? pkan::to_string(family) : pkan::to_string(family) + ":" + pkan::to_string(likelihood);
  }

  static Variant parse(std::string_view text) {
    const auto colon = text.find(':');
    Variant v;
    v.family = parse_family(text.substr(0, colon));
    if (is_point(v.family)) {
      if (colon != std::string_view::npos) throw InvalidArgument("variant '" + std::string(text) + "': PF models take no likelihood");
      v.likelihood = Likelihood::none;
    } else {
      if (colon == std::string_view::npos) throw InvalidArgument("variant '" + std::string(text) + "' needs ':gaussian' or ':student_t'");
      v.likelihood = parse_likelihood(text.substr(colon + 1));
      if (v.likelihood == Likelihood::none) throw InvalidArgument("variant '" + std::string(text) + "': probabilistic models need a likelihood");
    }
    return v;
  }

  friend bool operator==(const Variant&, const Variant&) = default;
};

enum class OutputFormat { csv, json };

inline std::string to_string(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json"; }

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw InvalidArgument("unknown format '" + std::string(s) + "' (expected csv or json)");
}

/// Policy names as accepted on the command line: static, p99, point.
inline ThresholdPolicy parse_policy(std::string_view s, double quantile) {
  if (s == "static") return ThresholdPolicy::static_max();
  if (s == "point") return ThresholdPolicy::point();
  if (s == "p99" || s == "dynamic") return ThresholdPolicy::dynamic(quantile);
  throw InvalidArgument("unknown policy '" + std::string(s) + "' (expected static, p99 or point)");
}

inline std::string policy_name(const ThresholdPolicy& p) {
  switch (p.kind) {
    case PolicyKind::static_max:
      return "static";
    case PolicyKind::point:
      return "point";
    case PolicyKind::dynamic_quantile:
      break;
  }
  return "p99";
}

/// Synthetic dataset of several beams. Beam b uses base + b * base_step,
/// amplitude + b * amplitude_step, phase + b * phase_step and its own seed.
struct DatasetSpec {
  std::size_t beams = 6;
  SyntheticSpec beam;  // beam 0; beam_id and seed are filled per beam
  double base_step = 10.0;
  double amplitude_step = 3.0;
  double phase_step = 0.5;

  SyntheticSpec for_beam(std::size_t b, std::uint64_t run_seed) const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// splitmix64 finalizer over (seed, stream, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream * 0x10001ULL + index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kStreamData = 1;
inline constexpr std::uint64_t kStreamModel = 2;

inline SyntheticSpec DatasetSpec::for_beam(std::size_t b, std::uint64_t run_seed) const {
  SyntheticSpec s = beam;
  s.beam_id = "beam" + std::to_string(b);
  s.base_level = beam.base_level + base_step * static_cast<double>(b);
  s.diurnal_amplitude = beam.diurnal_amplitude + amplitude_step * static_cast<double>(b);
  s.diurnal_phase = beam.diurnal_phase + phase_step * static_cast<double>(b);
  s.seed = derive_seed(run_seed, kStreamData, b);
  return s;
}

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = hardware concurrency

  // Relative paths resolve against `out`.
  std::filesystem::path out = ".";
  std::filesystem::path data = "data.csv";
  std::filesystem::path models = "models";
  std::filesystem::path reports = "reports";

  DatasetSpec dataset;

  std::vector<Variant> variants = {{Family::p_kan, Likelihood::gaussian},  {Family::p_kan, Likelihood::student_t},
                                   {Family::p_mlp, Likelihood::gaussian},  {Family::p_mlp, Likelihood::student_t},
                                   {Family::kan_pf, Likelihood::none},     {Family::mlp_pf, Likelihood::none}};
  std::size_t context = 168;
  std::size_t horizon = 24;
  std::vector<std::size_t> kan_hidden = {46, 10};
  std::vector<std::size_t> mlp_hidden = {512, 256, 128};
  int spline_order = 3;
  std::size_t num_basis = 8;
  double grid_min = -3.0;
  double grid_max = 3.0;

  TrainConfig train;
  SplitSpec split;
  EvalMode eval;

  ThresholdPolicy policy = ThresholdPolicy::dynamic(0.99);
  std::size_t allocation_stride = 24;
  RiskMetric risk = RiskMetric::mass_fraction;

  OutputFormat format = OutputFormat::csv;

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : out / p; }
  std::filesystem::path data_path() const { return resolve(data); }
  std::filesystem::path models_dir() const { return resolve(models); }
  std::filesystem::path reports_dir() const { return resolve(reports); }

  /// Model config for `variant` on the beam at sorted position `beam_index`.
  ModelConfig model_config(const Variant& variant, std::size_t beam_index = 0) const {
    ModelConfig c = ModelConfig::defaults(variant.family, variant.likelihood);
    c.context = context;
    c.horizon = horizon;
    c.hidden_sizes = is_kan(variant.family) ? kan_hidden : mlp_hidden;
    c.spline_order = spline_order;
    c.num_basis = num_basis;
    c.grid_min = grid_min;
    c.grid_max = grid_max;
    c.seed = derive_seed(seed, kStreamModel, beam_index);
    return c;
  }

  TrainConfig train_config(std::size_t beam_index = 0) const {
    TrainConfig t = train;
    t.seed = derive_seed(seed, kStreamModel, beam_index);
    return t;
  }

  std::size_t worker_count() const { return workers == 0 ? default_workers() : workers; }

  void validate() const {
    if (variants.empty()) throw InvalidArgument("config: [model] variants is empty");
    if (dataset.beams == 0) throw InvalidArgument("config: [synthetic] beams must be at least 1");
    dataset.beam.validate();
    for (const auto& v : variants) model_config(v).validate();
    train.validate();
    policy.validate();
    if (eval.stride == 0 || allocation_stride == 0) throw InvalidArgument("config: strides must be positive");
    if (split.train_hours < context + horizon) {
      throw InvalidArgument("config: train_hours must cover at least one context + horizon window");
    }
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

using boost::property_tree::ptree;

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw InvalidArgument("config: " + key + " = '" + text + "' is not a valid number");
  return value;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InvalidArgument("config: " + key + " = '" + text + "' is not a boolean");
}

class Reader {
 public:
  explicit Reader(const ptree& tree) : tree_(tree) {}

  std::optional<std::string> get(const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(ptree::path_type(key, '.'))) return trim(*v);
    return std::nullopt;
  }

  template <class T>
  void number(const std::string& key, T& target) const {
    if (auto v = get(key)) target = parse_number<T>(key, *v);
  }
  void text(const std::string& key, std::string& target) const {
    if (auto v = get(key)) target = *v;
  }
  void path(const std::string& key, std::filesystem::path& target) const {
    if (auto v = get(key)) target = *v;
  }
  void boolean(const std::string& key, bool& target) const {
    if (auto v = get(key)) target = parse_bool(key, *v);
  }
  void sizes(const std::string& key, std::vector<std::size_t>& target) const {
    if (auto v = get(key)) target = parse_sizes(key, *v);
  }

 private:
  const ptree& tree_;
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "run.seed", "run.workers",
      "paths.out", "paths.data", "paths.models", "paths.reports",
      "synthetic.beams", "synthetic.start", "synthetic.length_hours", "synthetic.base_level", "synthetic.base_step",
      "synthetic.diurnal_amplitude", "synthetic.amplitude_step", "synthetic.diurnal_phase", "synthetic.phase_step",
      "synthetic.weekly_amplitude", "synthetic.burst_rate", "synthetic.burst_shape", "synthetic.burst_scale",
      "synthetic.noise_family", "synthetic.noise_scale", "synthetic.noise_dof",
      "model.variants", "model.context", "model.horizon", "model.kan_hidden", "model.mlp_hidden",
      "model.spline_order", "model.num_basis", "model.grid_min", "model.grid_max",
      "train.epochs", "train.learning_rate", "train.beta1", "train.beta2", "train.epsilon", "train.batch_size",
      "train.shuffle", "train.gradient_clip_norm",
      "split.train_hours", "split.test_hours",
      "eval.mode", "eval.stride",
      "policy.kind", "policy.quantile", "policy.stride", "policy.risk",
      "output.format"};
  return keys;
}

inline void reject_unknown_keys(const ptree& tree) {
  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw InvalidArgument("config: key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (std::find(keys.begin(), keys.end(), full) == keys.end()) {
        throw InvalidArgument("config: unknown key '" + key + "' in [" + section + "]");
      }
    }
  }
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  detail::reject_unknown_keys(tree);
  const detail::Reader r(tree);
  RunConfig c;
  r.number("run.seed", c.seed);
  r.number("run.workers", c.workers);

  r.path("paths.out", c.out);
  r.path("paths.data", c.data);
  r.path("paths.models", c.models);
  r.path("paths.reports", c.reports);

  auto& d = c.dataset;
  r.number("synthetic.beams", d.beams);
  if (auto v = r.get("synthetic.start")) d.beam.start = parse_timestamp(*v);
  r.number("synthetic.length_hours", d.beam.length_hours);
  r.number("synthetic.base_level", d.beam.base_level);
  r.number("synthetic.base_step", d.base_step);
  r.number("synthetic.diurnal_amplitude", d.beam.diurnal_amplitude);
  r.number("synthetic.amplitude_step", d.amplitude_step);
  r.number("synthetic.diurnal_phase", d.beam.diurnal_phase);
  r.number("synthetic.phase_step", d.phase_step);
  r.number("synthetic.weekly_amplitude", d.beam.weekly_amplitude);
  r.number("synthetic.burst_rate", d.beam.burst_rate);
  r.number("synthetic.burst_shape", d.beam.burst_shape);
  r.number("synthetic.burst_scale", d.beam.burst_scale);
  if (auto v = r.get("synthetic.noise_family")) d.beam.noise_family = parse_likelihood(*v);
  r.number("synthetic.noise_scale", d.beam.noise_scale);
  r.number("synthetic.noise_dof", d.beam.noise_dof);

  if (auto v = r.get("model.variants")) {
    c.variants.clear();
    for (const auto& item : detail::split_list(*v)) c.variants.push_back(Variant::parse(item));
  }
  r.number("model.context", c.context);
  r.number("model.horizon", c.horizon);
  r.sizes("model.kan_hidden", c.kan_hidden);
  r.sizes("model.mlp_hidden", c.mlp_hidden);
  r.number("model.spline_order", c.spline_order);
  r.number("model.num_basis", c.num_basis);
  r.number("model.grid_min", c.grid_min);
  r.number("model.grid_max", c.grid_max);

  r.number("train.epochs", c.train.epochs);
  r.number("train.learning_rate", c.train.learning_rate);
  r.number("train.beta1", c.train.beta1);
  r.number("train.beta2", c.train.beta2);
  r.number("train.epsilon", c.train.epsilon);
  r.number("train.batch_size", c.train.batch_size);
  r.boolean("train.shuffle", c.train.shuffle);
  if (auto v = r.get("train.gradient_clip_norm")) {
    if (*v == "none") {
      c.train.gradient_clip_norm.reset();
    } else {
      c.train.gradient_clip_norm = detail::parse_number<double>("train.gradient_clip_norm", *v);
    }
  }

  r.number("split.train_hours", c.split.train_hours);
  r.number("split.test_hours", c.split.test_hours);

  if (auto v = r.get("eval.mode")) c.eval.kind = parse_eval_kind(*v);
  r.number("eval.stride", c.eval.stride);

  double q = c.policy.quantile;
  r.number("policy.quantile", q);
  std::string kind = policy_name(c.policy);
  r.text("policy.kind", kind);
  c.policy = parse_policy(kind, q);
  c.policy.quantile = q;
  r.number("policy.stride", c.allocation_stride);
  if (auto v = r.get("policy.risk")) {
    if (*v == "mass_fraction") {
      c.risk = RiskMetric::mass_fraction;
    } else if (*v == "event_rate") {
      c.risk = RiskMetric::event_rate;
    } else {
      throw InvalidArgument("config: policy.risk must be mass_fraction or event_rate");
    }
  }

  if (auto v = r.get("output.format")) c.format = parse_format(*v);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  return parse_run_config(in);
}

inline void write_run_config(std::ostream& out, const RunConfig& c) {
  const auto num = [](double v) { return format_double(v); };
  const auto& b = c.dataset.beam;
  std::string variants;
  for (std::size_t i = 0; i < c.variants.size(); ++i) variants += (i ? ", " : "") + c.variants[i].to_string();

  out << "[run]\n"
      << "seed = " << c.seed << "\n"
      << "workers = " << c.workers << "\n\n"
      << "[paths]\n"
      << "out = " << c.out.string() << "\n"
      << "data = " << c.data.string() << "\n"
      << "models = " << c.models.string() << "\n"
      << "reports = " << c.reports.string() << "\n\n"
      << "[synthetic]\n"
      << "beams = " << c.dataset.beams << "\n"
      << "start = " << format_timestamp(b.start) << "\n"
      << "length_hours = " << b.length_hours << "\n"
      << "base_level = " << num(b.base_level) << "\n"
      << "base_step = " << num(c.dataset.base_step) << "\n"
      << "diurnal_amplitude = " << num(b.diurnal_amplitude) << "\n"
      << "amplitude_step = " << num(c.dataset.amplitude_step) << "\n"
      << "diurnal_phase = " << num(b.diurnal_phase) << "\n"
      << "phase_step = " << num(c.dataset.phase_step) << "\n"
      << "weekly_amplitude = " << num(b.weekly_amplitude) << "\n"
      << "burst_rate = " << num(b.burst_rate) << "\n"
      << "burst_shape = " << num(b.burst_shape) << "\n"
      << "burst_scale = " << num(b.burst_scale) << "\n"
      << "noise_family = " << to_string(b.noise_family) << "\n"
      << "noise_scale = " << num(b.noise_scale) << "\n"
      << "noise_dof = " << num(b.noise_dof) << "\n\n"
      << "[model]\n"
      << "variants = " << variants << "\n"
      << "context = " << c.context << "\n"
      << "horizon = " << c.horizon << "\n"
      << "kan_hidden = " << detail::join_sizes(c.kan_hidden) << "\n"
      << "mlp_hidden = " << detail::join_sizes(c.mlp_hidden) << "\n"
      << "spline_order = " << c.spline_order << "\n"
      << "num_basis = " << c.num_basis << "\n"
      << "grid_min = " << num(c.grid_min) << "\n"
      << "grid_max = " << num(c.grid_max) << "\n\n"
      << "[train]\n"
      << "epochs = " << c.train.epochs << "\n"
      << "learning_rate = " << num(c.train.learning_rate) << "\n"
      << "beta1 = " << num(c.train.beta1) << "\n"
      << "beta2 = " << num(c.train.beta2) << "\n"
      << "epsilon = " << num(c.train.epsilon) << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "shuffle = " << (c.train.shuffle ? "true" : "false") << "\n"
      << "gradient_clip_norm = " << (c.train.gradient_clip_norm ? num(*c.train.gradient_clip_norm) : "none") << "\n\n"
      << "[split]\n"
      << "train_hours = " << c.split.train_hours << "\n"
      << "test_hours = " << c.split.test_hours << "\n\n"
      << "[eval]\n"
      << "mode = " << to_string(c.eval.kind) << "\n"
      << "stride = " << c.eval.stride << "\n\n"
      << "[policy]\n"
      << "kind = " << policy_name(c.policy) << "\n"
      << "quantile = " << num(c.policy.quantile) << "\n"
      << "stride = " << c.allocation_stride << "\n"
      << "risk = " << (c.risk == RiskMetric::mass_fraction ? "mass_fraction" : "event_rate") << "\n\n"
      << "[output]\n"
      << "format = " << to_string(c.format) << "\n";
}

}  // namespace pkan
