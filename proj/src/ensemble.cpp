#include "unravel/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace unravel {

int EnsembleResult::obs_index(const std::string& name) const {
  for (std::size_t i = 0; i < observable_names.size(); ++i) {
    if (observable_names[i] == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown observable: " + name);
}

void RunningStats::add(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

void RunningStats::merge(const RunningStats& other) {
  if (other.n == 0) return;
  if (n == 0) {
    *this = other;
    return;
  }
  const double delta = other.mean - mean;
  const auto total = n + other.n;
  mean += delta * static_cast<double>(other.n) / static_cast<double>(total);
  m2 += other.m2 +
        delta * delta * static_cast<double>(n) * static_cast<double>(other.n) /
            static_cast<double>(total);
  n = total;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::min(resolve_threads(threads), std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto body = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

EnsembleResult run_ensemble(const StateVector& psi0, const SimulationSetup& setup, int n_traj,
                            std::uint64_t seed, int threads) {
  if (n_traj < 2) throw std::invalid_argument("ensemble needs n_traj >= 2");

  std::vector<TrajectoryResult> per_traj(n_traj);
  std::vector<std::pair<int, std::string>> failures;
  std::mutex failure_mutex;

  parallel_for(n_traj, threads, [&](int i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    try {
      per_traj[i] = run_trajectory(psi0, setup.t_final, setup.h, setup.channels, setup.config,
                                   rng, setup.plan);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failures.emplace_back(i, e.what());
    }
  });
  if (!failures.empty()) {
    auto worst = failures.front();
    for (const auto& f : failures) {
      if (f.first < worst.first) worst = f;
    }
    std::ostringstream msg;
    msg << "trajectory " << worst.first << " failed: " << worst.second;
    throw std::runtime_error(msg.str());
  }

  EnsembleResult out;
  out.n_traj = n_traj;
  out.times = per_traj[0].times;
  const auto n_rec = static_cast<Eigen::Index>(out.times.size());
  const auto n_obs = static_cast<Eigen::Index>(setup.plan.observables.size());
  out.observable_names.reserve(n_obs);
  for (const auto& obs : setup.plan.observables) out.observable_names.push_back(obs.name);

  out.mean.assign(n_obs, std::vector<double>(n_rec, 0.0));
  out.variance.assign(n_obs, std::vector<double>(n_rec, 0.0));
  out.ci95.assign(n_obs, std::vector<double>(n_rec, 0.0));

  // Canonical trajectory-index order keeps the reduction bit-reproducible.
  for (Eigen::Index o = 0; o < n_obs; ++o) {
    for (Eigen::Index r = 0; r < n_rec; ++r) {
      RunningStats stats;
      for (int i = 0; i < n_traj; ++i) stats.add(per_traj[i].values(r, o));
      out.mean[o][r] = stats.mean;
      out.variance[o][r] = stats.variance();
      out.ci95[o][r] = 1.96 * std::sqrt(stats.variance() / static_cast<double>(n_traj));
    }
  }

  out.snapshot_times = setup.plan.snapshot_times;
  const std::size_t n_snap = setup.plan.snapshot_times.size();
  for (std::size_t s = 0; s < n_snap; ++s) {
    std::vector<Vector> states;
    states.reserve(n_traj);
    for (int i = 0; i < n_traj; ++i) states.push_back(per_traj[i].snapshots[s]);
    out.snapshot_density.push_back(ensemble_density(states));
  }

  for (int i = 0; i < n_traj; ++i) {
    out.max_tail_population = std::max(out.max_tail_population, per_traj[i].max_tail_population);
    out.max_norm_deviation = std::max(out.max_norm_deviation, per_traj[i].max_norm_deviation);
  }
  return out;
}

DensityMatrix ensemble_density(const std::vector<Vector>& states) {
  if (states.size() < 2) throw std::invalid_argument("ensemble density needs >= 2 states");
  const auto dim = states[0].size();
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  for (const Vector& psi : states) {
    if (psi.size() != dim) throw std::invalid_argument("state dimension mismatch in ensemble");
    rho.noalias() += psi * psi.adjoint();
  }
  rho /= static_cast<double>(states.size());
  return DensityMatrix{std::move(rho)};
}

RateEstimate fit_rate(const EnsembleResult& series, const std::string& observable,
                      std::pair<double, double> window) {
  const int o = series.obs_index(observable);
  std::vector<double> ts;
  std::vector<double> logs;
  for (std::size_t r = 0; r < series.times.size(); ++r) {
    const double t = series.times[r];
    if (t < window.first - 1e-12 || t > window.second + 1e-12) continue;
    const double m = series.mean[o][r];
    if (!(m > 0.0)) {
      std::ostringstream msg;
      msg << "non-positive mean " << m << " of " << observable << " at t = " << t
          << "; shrink the fit window";
      throw FitError(msg.str());
    }
    ts.push_back(t);
    logs.push_back(std::log(m));
  }
  if (ts.size() < 2) throw FitError("fit window contains fewer than two samples");

  const auto n = static_cast<double>(ts.size());
  double t_bar = 0.0, y_bar = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    t_bar += ts[i];
    y_bar += logs[i];
  }
  t_bar /= n;
  y_bar /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - t_bar) * (ts[i] - t_bar);
    sxy += (ts[i] - t_bar) * (logs[i] - y_bar);
  }
  if (sxx == 0.0) throw FitError("degenerate fit window");
  const double slope = sxy / sxx;

  double ss_res = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double fit = y_bar + slope * (ts[i] - t_bar);
    ss_res += (logs[i] - fit) * (logs[i] - fit);
  }
  RateEstimate est;
  est.rate = -slope;
  est.std_error = ts.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
  est.window = window;
  return est;
}

}  // namespace unravel
