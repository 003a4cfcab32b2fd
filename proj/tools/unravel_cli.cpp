// Command-line experiment runner around the preset library.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "unravel/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stochastic-unraveling experiment runner"};

  std::string config_path;
  app.add_option("--config", config_path, "experiment config file (key = value)")->required();

  unravel::ConfigOverrides overrides;
  std::uint64_t seed = 0;
  int n_traj = 0;
  int threads = 0;
  double dt = 0.0;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* traj_opt = app.add_option("--n-traj", n_traj, "override the trajectory count");
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* threads_opt =
      app.add_option("--threads", threads, "worker threads (0 = auto)")->envname("UNRAVEL_THREADS");
  auto* dt_opt = app.add_option("--dt", dt, "override the time step");
  bool paper_scale = false;
  app.add_flag("--paper-scale", paper_scale, "use the full-size preset parameters");

  CLI11_PARSE(app, argc, argv);

  if (*seed_opt) overrides.seed = seed;
  if (*traj_opt) overrides.n_traj = n_traj;
  if (*threads_opt) overrides.threads = threads;
  if (*dt_opt) overrides.dt = dt;
  if (*out_opt) overrides.output_path = out_dir;
  overrides.paper_scale = paper_scale;

  try {
    const unravel::ExperimentConfig cfg = unravel::parse_config_file(config_path, overrides);
    return unravel::run_experiment(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
