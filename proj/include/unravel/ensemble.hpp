// Parallel ensemble execution, per-time means/variances with confidence
// intervals, exponential-rate fitting, and ensemble density reconstruction.
// Reduction always runs in trajectory-index order so results are independent
// of the thread count.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unravel/master.hpp"
#include "unravel/sde.hpp"

namespace unravel {

/// Everything one trajectory needs; shared read-only across workers.
struct SimulationSetup {
  Hamiltonian h;
  std::vector<LindbladChannel> channels;
  SdeConfig config;
  double t_final = 0.0;
  RecordingPlan plan;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<std::string> observable_names;
  // Indexed [observable][time]. ci95 = 1.96 sqrt(variance / n_traj).
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> variance;
  std::vector<std::vector<double>> ci95;
  int n_traj = 0;

  std::vector<double> snapshot_times;
  std::vector<DensityMatrix> snapshot_density;

  double max_tail_population = 0.0;
  double max_norm_deviation = 0.0;

  int obs_index(const std::string& name) const;  // throws if absent
};

/// Mean/variance accumulator with a numerically stable pairwise merge.
struct RunningStats {
  long long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const RunningStats& other);
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

/// Runs n_traj independent trajectories with stream ids 0..n_traj-1.
/// Deterministic for fixed (seed, n_traj, setup) regardless of threads.
EnsembleResult run_ensemble(const StateVector& psi0, const SimulationSetup& setup, int n_traj,
                            std::uint64_t seed, int threads = 0);

/// rho = M(|psi><psi|) over the given states (>= 2).
DensityMatrix ensemble_density(const std::vector<Vector>& states);

struct RateEstimate {
  double rate = 0.0;       // decay rate: mean ~ exp(-rate * t)
  double std_error = 0.0;  // from fit residuals
  std::pair<double, double> window{0.0, 0.0};
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares slope of log(mean) vs t inside the window; throws FitError
/// on non-positive means (localization already complete - shrink the window).
RateEstimate fit_rate(const EnsembleResult& series, const std::string& observable,
                      std::pair<double, double> window);

/// Index-partitioned parallel loop used by the ensemble runner; exposed for
/// other embarrassingly parallel sweeps. fn(i) must not touch shared state.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Resolves a thread-count request: 0 means hardware concurrency.
int resolve_threads(int requested);

}  // namespace unravel
