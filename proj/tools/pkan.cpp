// pkan: generate synthetic beams, train, evaluate, allocate, count parameters.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 training divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "pkan/commands.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> policy;
  std::optional<double> quantile;
};

pkan::RunConfig resolve(const Overrides& o) {
  pkan::RunConfig c = o.config.empty() ? pkan::RunConfig{} : pkan::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.format) c.format = pkan::parse_format(*o.format);
  if (o.quantile) c.policy.quantile = *o.quantile;
  if (o.policy) c.policy = pkan::parse_policy(*o.policy, c.policy.quantile);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic KAN / MLP traffic forecasting and PRB allocation"};
  app.require_subcommand(1, 1);
  Overrides o;
  app.add_option("--config", o.config, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "run seed (overrides [run] seed)");
  app.add_option("--out", o.out, "output root directory");
  app.add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--policy", o.policy, "allocation policy")->check(CLI::IsMember({"static", "p99", "point"}));
  app.add_option("--quantile", o.quantile, "quantile for the dynamic policy")->check(CLI::Range(0.0, 1.0));
  app.fallthrough();

  auto* generate = app.add_subcommand("generate", "write a synthetic multi-beam CSV dataset");
  auto* train = app.add_subcommand("train", "train one model per beam and variant");
  auto* evaluate = app.add_subcommand("evaluate", "forecast metrics over the test split");
  auto* allocate = app.add_subcommand("allocate", "dynamic-threshold PRB allocation and Pareto set");
  auto* count = app.add_subcommand("count-params", "trainable parameters per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const pkan::RunConfig config = resolve(o);
    if (generate->parsed()) pkan::cmd_generate(config, std::cout);
    if (train->parsed()) pkan::cmd_train(config, std::cout);
    if (evaluate->parsed()) pkan::cmd_evaluate(config, std::cout);
    if (allocate->parsed()) pkan::cmd_allocate(config, std::cout);
    if (count->parsed()) pkan::cmd_count_params(config, std::cout);
  } catch (const pkan::TrainingFailed& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const pkan::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const pkan::InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
