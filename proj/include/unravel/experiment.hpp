// Experiment runner: named presets at desk or paper scale, key = value config
// parsing, CSV emission and deterministic seeding.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unravel/ensemble.hpp"
#include "unravel/models.hpp"

namespace unravel {

enum class Preset {
  kFig1,
  kFig2,
  kFig3,
  kFig4,
  kFig5a,
  kFig5b,
  kHermitianRates,
  kSqueezingDecay,
  kOracleCheck,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolicySpec {
  CorrelationPolicy policy;
  std::string token;  // canonical form, e.g. "fixed:0", "cov:1"
  std::string slug;   // filesystem-safe form, e.g. "fixed_0"
};

struct ExperimentConfig {
  Preset preset = Preset::kFig1;
  std::string preset_name;
  std::uint64_t seed = 1;
  bool paper_scale = false;
  int threads = 0;

  int dim = 0;
  int n_traj = 0;
  double dt = 0.0;
  double t_final = 0.0;
  double output_stride = 0.0;
  double kappa = 1.0;
  std::vector<PolicySpec> policies;
  std::string output_path = ".";

  // initial-state parameters (preset dependent)
  int fock_n = 0;
  int fock_n2 = 0;
  double cat_alpha = 0.0;
  Complex gamma0{0.0, 0.0};
  Complex alpha0{0.0, 0.0};

  // kicked-oscillator presets
  KickedOscillatorParams kicked;
  std::vector<double> lambda_list;
  std::vector<int> dim_list;
  int periods = 0;
  int discard_periods = 0;
  bool exponential_diagonal = false;

  // resolved key = value view, in canonical order, for the manifest
  std::vector<std::pair<std::string, std::string>> resolved;
};

/// Parses line-oriented "key = value" text ('#' starts a comment). Unknown
/// keys are rejected with their line number; keys prefixed run_ are ignored
/// so manifests parse as configs. Later duplicates win.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// CLI overrides, applied as if appended to the config file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> n_traj;
  std::optional<int> threads;
  std::optional<double> dt;
  std::optional<std::string> output_path;
  bool paper_scale = false;
};

ExperimentConfig parse_config_file(const std::string& path, const ConfigOverrides& overrides);

/// Runs the experiment, writing one CSV per policy plus a manifest into
/// output_path. Throws on any module error; returns 0 on success.
int run_experiment(const ExperimentConfig& config);

PolicySpec parse_policy_token(const std::string& token);
StateVector initial_state(const ExperimentConfig& config);

inline constexpr const char* kCodeVersion = "1.0.0";

}  // namespace unravel
