#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conjlab/conjlab.hpp"

namespace conjlab::cli {

inline constexpr int kConfigVersion = 1;
inline constexpr int kSchemaVersion = 1;

/// One system of the pair with its initial state.
struct SystemEntry {
  SystemSpec spec;
  State initial;
};

struct HartmanSettings {
  Matrix A;
  std::string perturbation = "sine";  // sine | zero
  double scale = 0.1;
  Vector lower, upper;
  std::vector<int> nodes;
  double quad_step = 0.01;
  double tol = 1e-8;
  int max_iter = 200;
  double s_cutoff = 0.0;
  std::vector<Vector> verify_x0;
  double verify_horizon = 5.0;
  double verify_dt = 0.001;
  // Optional terminal-map run.
  bool terminal = false;
  Vector t_x0, t_y0, t_y1;
  double t1 = 1.0;
  double c1 = 1.0, c2 = 1.0;
};

struct PredictSettings {
  int segments = 3;
  double window = 1.0;
  std::string mode = "future";  // future | past
  double epsilon = 1e-3;
};

struct ExperimentConfig {
  std::optional<std::string> analysis;
  SystemEntry x;
  std::optional<SystemEntry> y;
  double horizon = 30.0;
  double dt = 0.01;
  Method method = Method::rk4;
  std::uint64_t seed = 0;
  std::string similarity = "log1p-ratio";
  std::string out_dir = "out";
  std::string prefix;
  std::string format = "csv";
  unsigned threads = 0;
  std::string polyline = "none";  // none | samples | euler
  int polyline_segments = 0;      // 0: one per sample step
  int poly_degree = 2;
  std::string adjoint_map = "least-squares";  // least-squares | identity | algorithm1 | algorithm2
  HartmanSettings hartman;
  PredictSettings predict;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// Defaults: lorenz1 vs lorenz2, T = 30, dt = 0.01.
ExperimentConfig default_config();

/// Parses a versioned JSON config; unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);

/// Subcommand names in the order they are listed by --help.
const std::vector<std::string>& subcommands();

/// Runs one subcommand and writes its artifacts into cfg.out_dir.
/// Returns the paths written, in order.
std::vector<std::filesystem::path> run(const std::string& command, const ExperimentConfig& cfg);

/// Two decimals with ties to even, e.g. 0.866449 -> "86.64".
std::string percent(double rho);

}  // namespace conjlab::cli
