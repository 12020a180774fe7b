#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "experiment.hpp"
#include "json.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3 };

int fail(int code, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json rec;
  rec["error"] = kind;
  rec["message"] = message;
  rec["exit_code"] = code;
  std::cerr << rec.dump() << std::endl;
  return code;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw conjlab::ConfigError("cannot read config '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace conjlab;
  CLI::App app{"conjlab: similarity and conjugacy analysis of dynamical systems"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, format;
  std::uint64_t seed = 0;
  double dt = 0.0, horizon = 0.0;
  for (const auto& name : cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed recorded in artifacts and used for perturbations");
    sub->add_option("--dt", dt, "integration step");
    sub->add_option("--horizon", horizon, "integration horizon T");
    sub->add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfig, "usage_error", e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();

  cli::ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? cli::default_config() : cli::parse_config(slurp(config_path));
    if (sub->count("--out")) cfg.out_dir = out_dir;
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--dt")) cfg.dt = dt;
    if (sub->count("--horizon")) cfg.horizon = horizon;
    if (sub->count("--format")) cfg.format = format;
    cfg.validate();
  } catch (const Error& e) {
    return fail(kConfig, "config_error", e.what());
  }

  try {
    for (const auto& path : cli::run(command, cfg)) std::cout << path.string() << '\n';
  } catch (const ConfigError& e) {
    return fail(kConfig, e.kind(), e.what());
  } catch (const NumericalError& e) {
    return fail(kNumerical, e.kind(), e.what());
  } catch (const InvalidArgument& e) {
    return fail(kConfig, e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(kNumerical, "error", e.what());
  }
  return kOk;
}
