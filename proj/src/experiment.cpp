#include "unravel/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace unravel {

namespace {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected 'key = value', got '" << line << "'";
      throw ConfigError(msg.str());
    }
    Entry e;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty()) {
      std::ostringstream msg;
      msg << "line " << line_no << ": empty key";
      throw ConfigError(msg.str());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

[[noreturn]] void bad_value(const Entry& e, const char* what) {
  std::ostringstream msg;
  msg << "line " << e.line << ": key '" << e.key << "': expected " << what << ", got '"
      << e.value << "'";
  throw ConfigError(msg.str());
}

double to_double(const Entry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) bad_value(e, "a number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(e, "a number");
  }
}

long long to_int(const Entry& e) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) bad_value(e, "an integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(e, "an integer");
  }
}

std::uint64_t to_uint64(const Entry& e) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(e.value, &used);
    if (used != e.value.size()) bad_value(e, "an unsigned integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(e, "an unsigned integer");
  }
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, "true/false");
}

Complex to_complex(const Entry& e) {
  const auto comma = e.value.find(',');
  try {
    if (comma == std::string::npos) return Complex(std::stod(e.value), 0.0);
    return Complex(std::stod(e.value.substr(0, comma)), std::stod(e.value.substr(comma + 1)));
  } catch (...) {
    bad_value(e, "a complex number 're[,im]'");
  }
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_complex(Complex v) {
  if (v.imag() == 0.0) return fmt_g(v.real());
  return fmt_g(v.real()) + "," + fmt_g(v.imag());
}

std::string slugify(const std::string& token) {
  std::string out;
  for (char ch : token) {
    switch (ch) {
      case ':':
      case ',':
        out.push_back('_');
        break;
      case '-':
        out.push_back('m');
        break;
      case '.':
        out.push_back('p');
        break;
      default:
        out.push_back(ch);
    }
  }
  return out;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "preset",     "seed",        "paper_scale", "threads",     "dim",
      "n_traj",     "dt",          "t_final",     "output_stride", "kappa",
      "policies",   "output_path", "fock_n",      "fock_n2",     "cat_alpha",
      "gamma0",     "alpha0",      "beta0",       "tau1",        "tau2",
      "chi",        "lambda_list", "dim_list",    "periods",     "discard_periods",
      "exp_diagonal"};
  return keys;
}

Preset preset_from_name(const std::string& name, int line) {
  if (name == "fig1") return Preset::kFig1;
  if (name == "fig2") return Preset::kFig2;
  if (name == "fig3") return Preset::kFig3;
  if (name == "fig4") return Preset::kFig4;
  if (name == "fig5a") return Preset::kFig5a;
  if (name == "fig5b") return Preset::kFig5b;
  if (name == "hermitian_rates") return Preset::kHermitianRates;
  if (name == "squeezing_decay") return Preset::kSqueezingDecay;
  if (name == "oracle_check") return Preset::kOracleCheck;
  std::ostringstream msg;
  msg << "line " << line << ": unknown preset '" << name << "'";
  throw ConfigError(msg.str());
}

bool is_fig5(Preset p) { return p == Preset::kFig5a || p == Preset::kFig5b; }

std::vector<PolicySpec> parse_policies(const Entry& e) {
  std::vector<PolicySpec> out;
  for (const std::string& tok : split_ws(e.value)) {
    try {
      out.push_back(parse_policy_token(tok));
    } catch (const std::exception& ex) {
      std::ostringstream msg;
      msg << "line " << e.line << ": " << ex.what();
      throw ConfigError(msg.str());
    }
  }
  if (out.empty()) bad_value(e, "at least one policy token");
  return out;
}

std::vector<PolicySpec> default_policies(const std::string& tokens) {
  std::vector<PolicySpec> out;
  for (const std::string& tok : split_ws(tokens)) out.push_back(parse_policy_token(tok));
  return out;
}

void apply_defaults(ExperimentConfig& cfg) {
  cfg.seed = 1;
  cfg.threads = 0;
  cfg.kappa = 1.0;
  cfg.output_path = ".";
  cfg.dt = 1e-3;
  cfg.t_final = 2.0;
  cfg.output_stride = 0.01;
  cfg.exponential_diagonal = false;
  switch (cfg.preset) {
    case Preset::kFig1:
      cfg.dim = cfg.paper_scale ? 30 : 24;
      cfg.fock_n = cfg.paper_scale ? 24 : 8;
      cfg.n_traj = cfg.paper_scale ? 1000 : 200;
      cfg.policies = default_policies("cov:1 fixed:0 fixed:1");
      break;
    case Preset::kFig2:
      cfg.dim = cfg.paper_scale ? 30 : 24;
      cfg.fock_n = cfg.paper_scale ? 23 : 7;
      cfg.fock_n2 = cfg.paper_scale ? 25 : 9;
      cfg.n_traj = cfg.paper_scale ? 1000 : 200;
      cfg.policies = default_policies("cov:1 fixed:0 fixed:1");
      break;
    case Preset::kFig3:
      cfg.dim = cfg.paper_scale ? 64 : 40;
      cfg.cat_alpha = cfg.paper_scale ? 4.0 : 2.5;
      cfg.n_traj = cfg.paper_scale ? 1000 : 200;
      cfg.policies = default_policies("cov:1 fixed:0 fixed:1");
      break;
    case Preset::kFig4:
      cfg.dim = cfg.paper_scale ? 30 : 24;
      cfg.fock_n = cfg.paper_scale ? 23 : 7;
      cfg.fock_n2 = cfg.paper_scale ? 25 : 9;
      cfg.n_traj = cfg.paper_scale ? 1000 : 200;
      cfg.t_final = 4.0;
      cfg.output_stride = 0.02;
      cfg.policies = default_policies("cov:1 fixed:0 fixed:1");
      break;
    case Preset::kFig5a:
    case Preset::kFig5b:
      cfg.kicked = KickedOscillatorParams{};
      cfg.kappa = cfg.kicked.kappa;
      cfg.lambda_list = cfg.paper_scale ? std::vector<double>{1.0, 2.0, 4.0}
                                        : std::vector<double>{1.0, 2.0};
      cfg.dim_list = cfg.paper_scale ? std::vector<int>{32, 48, 96} : std::vector<int>{32, 48};
      cfg.periods = cfg.paper_scale ? 2500 : 200;
      cfg.discard_periods = cfg.paper_scale ? 500 : 50;
      cfg.n_traj = 1;
      cfg.dt = 2e-4;
      cfg.t_final = 0.0;  // derived from periods
      cfg.output_stride = 0.02;
      cfg.exponential_diagonal = true;
      cfg.policies = default_policies("fixed:0 cov:1");
      break;
    case Preset::kHermitianRates:
      cfg.dim = 8;
      cfg.n_traj = 5000;
      cfg.t_final = 0.05;
      cfg.output_stride = 1e-3;
      cfg.policies = default_policies("fixed:1 fixed:0 fixed:-1");
      break;
    case Preset::kSqueezingDecay:
      cfg.dim = 30;
      cfg.gamma0 = Complex(0.5, 0.0);
      cfg.alpha0 = Complex(0.0, 0.0);
      cfg.n_traj = 200;
      cfg.policies = default_policies("squeezed:1 cov:1 fixed:0");
      break;
    case Preset::kOracleCheck:
      cfg.dim = 2;
      cfg.n_traj = 2000;
      cfg.t_final = 1.0;
      cfg.policies = default_policies("fixed:0 fixed:1 fixed:-1 fixed:0,1 cov:1");
      break;
  }
}

void apply_entry(ExperimentConfig& cfg, const Entry& e) {
  if (e.key.rfind("run_", 0) == 0) return;  // manifest-generated fields
  if (e.key == "preset" || e.key == "paper_scale") return;  // handled up front
  if (e.key == "seed") {
    cfg.seed = to_uint64(e);
  } else if (e.key == "threads") {
    const long long v = to_int(e);
    if (v < 0) bad_value(e, "threads >= 0");
    cfg.threads = static_cast<int>(v);
  } else if (e.key == "dim") {
    cfg.dim = static_cast<int>(to_int(e));
  } else if (e.key == "n_traj") {
    cfg.n_traj = static_cast<int>(to_int(e));
  } else if (e.key == "dt") {
    cfg.dt = to_double(e);
  } else if (e.key == "t_final") {
    if (is_fig5(cfg.preset)) {
      std::ostringstream msg;
      msg << "line " << e.line << ": fig5 presets derive t_final from 'periods'";
      throw ConfigError(msg.str());
    }
    cfg.t_final = to_double(e);
  } else if (e.key == "output_stride") {
    cfg.output_stride = to_double(e);
  } else if (e.key == "kappa") {
    cfg.kappa = to_double(e);
    cfg.kicked.kappa = cfg.kappa;
  } else if (e.key == "policies") {
    cfg.policies = parse_policies(e);
  } else if (e.key == "output_path") {
    cfg.output_path = e.value;
  } else if (e.key == "fock_n") {
    cfg.fock_n = static_cast<int>(to_int(e));
  } else if (e.key == "fock_n2") {
    cfg.fock_n2 = static_cast<int>(to_int(e));
  } else if (e.key == "cat_alpha") {
    cfg.cat_alpha = to_double(e);
  } else if (e.key == "gamma0") {
    cfg.gamma0 = to_complex(e);
  } else if (e.key == "alpha0") {
    cfg.alpha0 = to_complex(e);
  } else if (e.key == "beta0") {
    cfg.kicked.beta0 = to_double(e);
  } else if (e.key == "tau1") {
    cfg.kicked.tau1 = to_double(e);
  } else if (e.key == "tau2") {
    cfg.kicked.tau2 = to_double(e);
  } else if (e.key == "chi") {
    cfg.kicked.chi = to_double(e);
  } else if (e.key == "lambda_list") {
    cfg.lambda_list.clear();
    for (const std::string& tok : split_ws(e.value)) {
      try {
        cfg.lambda_list.push_back(std::stod(tok));
      } catch (...) {
        bad_value(e, "a list of numbers");
      }
    }
  } else if (e.key == "dim_list") {
    cfg.dim_list.clear();
    for (const std::string& tok : split_ws(e.value)) {
      try {
        cfg.dim_list.push_back(std::stoi(tok));
      } catch (...) {
        bad_value(e, "a list of integers");
      }
    }
  } else if (e.key == "periods") {
    cfg.periods = static_cast<int>(to_int(e));
  } else if (e.key == "discard_periods") {
    cfg.discard_periods = static_cast<int>(to_int(e));
  } else if (e.key == "exp_diagonal") {
    cfg.exponential_diagonal = to_bool(e);
  } else {
    std::ostringstream msg;
    msg << "line " << e.line << ": unknown key '" << e.key << "'";
    throw ConfigError(msg.str());
  }
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) {
    std::ostringstream msg;
    msg << name << " must be positive, got " << v;
    throw ConfigError(msg.str());
  }
}

void validate(const ExperimentConfig& cfg) {
  require_positive(cfg.dt, "dt");
  require_positive(cfg.output_stride, "output_stride");
  require_positive(cfg.kappa, "kappa");
  if (cfg.policies.empty()) throw ConfigError("policies must not be empty");
  if (is_fig5(cfg.preset)) {
    if (cfg.n_traj < 1) throw ConfigError("n_traj must be >= 1");
    if (cfg.periods < 1) throw ConfigError("periods must be >= 1");
    if (cfg.discard_periods < 0 || cfg.discard_periods >= cfg.periods) {
      throw ConfigError("discard_periods must be in [0, periods)");
    }
    if (cfg.lambda_list.empty()) throw ConfigError("lambda_list must not be empty");
    if (cfg.lambda_list.size() != cfg.dim_list.size()) {
      throw ConfigError("dim_list must have one entry per lambda");
    }
    for (double l : cfg.lambda_list) {
      if (l < 1.0) throw ConfigError("every lambda must be >= 1");
    }
    for (int d : cfg.dim_list) {
      if (d < 2) throw ConfigError("every dim must be >= 2");
    }
    require_positive(cfg.kicked.tau1, "tau1");
    require_positive(cfg.kicked.tau2, "tau2");
  } else {
    if (cfg.dim < 2) throw ConfigError("dim must be >= 2");
    if (cfg.n_traj < 2) throw ConfigError("n_traj must be >= 2");
    require_positive(cfg.t_final, "t_final");
    if (cfg.preset == Preset::kSqueezingDecay && std::abs(cfg.gamma0) >= 1.0) {
      throw ConfigError("|gamma0| must be < 1");
    }
  }
}

std::string policies_value(const ExperimentConfig& cfg) {
  std::string out;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    if (i > 0) out += " ";
    out += cfg.policies[i].token;
  }
  return out;
}

void build_resolved(ExperimentConfig& cfg) {
  auto& r = cfg.resolved;
  r.clear();
  r.emplace_back("preset", cfg.preset_name);
  r.emplace_back("seed", std::to_string(cfg.seed));
  r.emplace_back("paper_scale", cfg.paper_scale ? "true" : "false");
  r.emplace_back("threads", std::to_string(cfg.threads));
  r.emplace_back("n_traj", std::to_string(cfg.n_traj));
  r.emplace_back("dt", fmt_g(cfg.dt));
  r.emplace_back("output_stride", fmt_g(cfg.output_stride));
  r.emplace_back("kappa", fmt_g(cfg.kappa));
  r.emplace_back("policies", policies_value(cfg));
  r.emplace_back("output_path", cfg.output_path);
  if (is_fig5(cfg.preset)) {
    r.emplace_back("beta0", fmt_g(cfg.kicked.beta0));
    r.emplace_back("tau1", fmt_g(cfg.kicked.tau1));
    r.emplace_back("tau2", fmt_g(cfg.kicked.tau2));
    r.emplace_back("chi", fmt_g(cfg.kicked.chi));
    std::string lambdas, dims;
    for (std::size_t i = 0; i < cfg.lambda_list.size(); ++i) {
      if (i > 0) {
        lambdas += " ";
        dims += " ";
      }
      lambdas += fmt_g(cfg.lambda_list[i]);
      dims += std::to_string(cfg.dim_list[i]);
    }
    r.emplace_back("lambda_list", lambdas);
    r.emplace_back("dim_list", dims);
    r.emplace_back("periods", std::to_string(cfg.periods));
    r.emplace_back("discard_periods", std::to_string(cfg.discard_periods));
    r.emplace_back("exp_diagonal", cfg.exponential_diagonal ? "true" : "false");
  } else {
    r.emplace_back("dim", std::to_string(cfg.dim));
    r.emplace_back("t_final", fmt_g(cfg.t_final));
    switch (cfg.preset) {
      case Preset::kFig1:
        r.emplace_back("fock_n", std::to_string(cfg.fock_n));
        break;
      case Preset::kFig2:
      case Preset::kFig4:
        r.emplace_back("fock_n", std::to_string(cfg.fock_n));
        r.emplace_back("fock_n2", std::to_string(cfg.fock_n2));
        break;
      case Preset::kFig3:
        r.emplace_back("cat_alpha", fmt_g(cfg.cat_alpha));
        break;
      case Preset::kSqueezingDecay:
        r.emplace_back("gamma0", fmt_complex(cfg.gamma0));
        r.emplace_back("alpha0", fmt_complex(cfg.alpha0));
        break;
      default:
        break;
    }
    if (cfg.exponential_diagonal) r.emplace_back("exp_diagonal", "true");
  }
}

// ---------------------------------------------------------------------------
// Output helpers

std::string fmt_e(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out << ',';
    out << header[i];
  }
  out << "\r\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << fmt_e(row[i]);
    }
    out << "\r\n";
  }
}

void write_ensemble_csv(const std::string& path, const EnsembleResult& res) {
  std::vector<std::string> header = {"t", "mean_sigma2_a", "var_sigma2_a", "ci95"};
  for (std::size_t o = 1; o < res.observable_names.size(); ++o) {
    header.push_back("mean_" + res.observable_names[o]);
    header.push_back("var_" + res.observable_names[o]);
    header.push_back("ci95_" + res.observable_names[o]);
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(res.times.size());
  for (std::size_t r = 0; r < res.times.size(); ++r) {
    std::vector<double> row = {res.times[r], res.mean[0][r], res.variance[0][r], res.ci95[0][r]};
    for (std::size_t o = 1; o < res.observable_names.size(); ++o) {
      row.push_back(res.mean[o][r]);
      row.push_back(res.variance[o][r]);
      row.push_back(res.ci95[o][r]);
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

std::string out_file(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.output_path) / name).string();
}

void write_manifest(const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& run_fields) {
  std::ofstream out(out_file(cfg, cfg.preset_name + "_manifest.txt"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest");
  for (const auto& [k, v] : cfg.resolved) out << k << " = " << v << "\n";
  out << "run_code_version = " << kCodeVersion << "\n";
  for (const auto& [k, v] : run_fields) out << k << " = " << v << "\n";
}

// ---------------------------------------------------------------------------
// Preset runners

std::vector<ObservableSpec> standard_observables(const ExperimentConfig& cfg) {
  const Operator a = annihilation(cfg.dim);
  std::vector<ObservableSpec> obs;
  if (cfg.preset == Preset::kHermitianRates) {
    // sigma^2 of the channel operator; the column name is fixed by the CSV
    // contract even though the operator here is the number operator.
    obs.push_back(obs_msd("sigma2_a", number_operator(cfg.dim)));
    return obs;
  }
  obs.push_back(obs_msd("sigma2_a", a));
  if (cfg.preset == Preset::kSqueezingDecay) {
    obs.push_back(obs_abs_covariance("abs_cov_adag_a", creation(cfg.dim), a));
    obs.push_back(obs_squeezing_gamma_re("gamma_re"));
    obs.push_back(obs_squeezing_gamma_im("gamma_im"));
    obs.push_back(obs_squeezing_residual("squeeze_residual"));
  }
  return obs;
}

Operator channel_operator(const ExperimentConfig& cfg) {
  const double root_kappa = std::sqrt(cfg.kappa);
  if (cfg.preset == Preset::kHermitianRates) return root_kappa * number_operator(cfg.dim);
  return root_kappa * annihilation(cfg.dim);
}

void run_ensemble_preset(const ExperimentConfig& cfg,
                         std::vector<std::pair<std::string, std::string>>& run_fields) {
  const StateVector psi0 = initial_state(cfg);
  const Operator l = channel_operator(cfg);
  double max_tail = 0.0;
  for (const PolicySpec& pol : cfg.policies) {
    SimulationSetup setup;
    setup.h = no_hamiltonian();
    setup.channels.emplace_back(l, pol.policy);
    setup.config.dt = cfg.dt;
    setup.config.exponential_diagonal = cfg.exponential_diagonal;
    setup.t_final = cfg.t_final;
    setup.plan.stride = cfg.output_stride;
    setup.plan.observables = standard_observables(cfg);
    const EnsembleResult res = run_ensemble(psi0, setup, cfg.n_traj, cfg.seed, cfg.threads);
    write_ensemble_csv(out_file(cfg, cfg.preset_name + "_" + pol.slug + ".csv"), res);
    max_tail = std::max(max_tail, res.max_tail_population);
  }
  run_fields.emplace_back("run_max_tail_population", fmt_e(max_tail));
}

void run_oracle_check(const ExperimentConfig& cfg,
                      std::vector<std::pair<std::string, std::string>>& run_fields) {
  const StateVector psi0 = initial_state(cfg);
  const Operator l = channel_operator(cfg);

  std::vector<LindbladChannel> master_channels;
  master_channels.emplace_back(l, CorrelationPolicy::fixed(Complex(0.0, 0.0)));
  DensityMatrix rho0{psi0.amplitudes() * psi0.amplitudes().adjoint()};
  const MasterSeries oracle =
      evolve(rho0, cfg.t_final, no_hamiltonian(), master_channels, cfg.dt, cfg.output_stride);
  const MasterSeries oracle_half =
      evolve(rho0, cfg.t_final, no_hamiltonian(), master_channels, 0.5 * cfg.dt,
             cfg.output_stride);
  const double rk4_check =
      trace_distance(oracle.rhos.back(), oracle_half.rhos.back());
  run_fields.emplace_back("run_oracle_rk4_halving", fmt_e(rk4_check));

  std::vector<double> snapshot_times = oracle.times;
  double max_tail = 0.0;
  for (const PolicySpec& pol : cfg.policies) {
    SimulationSetup setup;
    setup.h = no_hamiltonian();
    setup.channels.emplace_back(l, pol.policy);
    setup.config.dt = cfg.dt;
    setup.t_final = cfg.t_final;
    setup.plan.stride = cfg.output_stride;
    setup.plan.snapshot_times = snapshot_times;
    const EnsembleResult res = run_ensemble(psi0, setup, cfg.n_traj, cfg.seed, cfg.threads);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
      rows.push_back(
          {snapshot_times[i], trace_distance(res.snapshot_density[i].rho, oracle.rhos[i])});
    }
    write_csv(out_file(cfg, cfg.preset_name + "_" + pol.slug + ".csv"),
              {"t", "trace_distance"}, rows);
    max_tail = std::max(max_tail, res.max_tail_population);
  }
  run_fields.emplace_back("run_max_tail_population", fmt_e(max_tail));
}

struct StationaryStats {
  double mean = 0.0;
  double variance = 0.0;
  double naive_se = 0.0;
  double split_gap = 0.0;  // |mean(first half) - mean(second half)| of the window
};

StationaryStats window_stats(const std::vector<double>& times, const Eigen::MatrixXd& values,
                             Eigen::Index col, double t_start) {
  RunningStats all, first, second;
  const double t_end = times.back();
  const double t_mid = 0.5 * (t_start + t_end);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_start) continue;
    const double v = values(static_cast<Eigen::Index>(i), col);
    all.add(v);
    (times[i] < t_mid ? first : second).add(v);
  }
  StationaryStats out;
  out.mean = all.mean;
  out.variance = all.variance();
  out.naive_se = all.n > 0 ? std::sqrt(all.variance() / static_cast<double>(all.n)) : 0.0;
  out.split_gap = std::abs(first.mean - second.mean);
  return out;
}

void run_kicked(const ExperimentConfig& cfg,
                std::vector<std::pair<std::string, std::string>>& run_fields) {
  std::vector<std::string> summary_lines;
  summary_lines.push_back(
      "lambda,policy,stationary_mean_sigma2_a,stationary_var_sigma2_a,naive_se,split_gap");
  double max_tail = 0.0;

  for (std::size_t i = 0; i < cfg.lambda_list.size(); ++i) {
    const double lambda = cfg.lambda_list[i];
    const int dim = cfg.dim_list[i];
    const KickedOscillatorParams params = apply_scaling(cfg.kicked, lambda);
    const double dt = cfg.dt * lambda;
    const double stride = cfg.output_stride * lambda;
    const double t_final = cfg.periods * params.period();
    const double t_window = cfg.discard_periods * params.period();

    const Hamiltonian h = make_kicked_hamiltonian(params, dim, dt);
    const Operator l = std::sqrt(params.kappa) * annihilation(dim);
    const StateVector psi0 = fock_state(dim, 0);

    std::string lambda_tag = fmt_g(lambda);
    for (char& ch : lambda_tag) {
      if (ch == '.') ch = 'p';
    }

    for (const PolicySpec& pol : cfg.policies) {
      SimulationSetup setup;
      setup.h = h;
      setup.channels.emplace_back(l, pol.policy);
      setup.config.dt = dt;
      setup.config.exponential_diagonal = cfg.exponential_diagonal;
      setup.t_final = t_final;
      setup.plan.stride = stride;
      setup.plan.observables.push_back(obs_msd("sigma2_a", annihilation(dim)));
      setup.plan.observables.push_back(obs_expect_re("n_expect", number_operator(dim)));

      std::vector<TrajectoryResult> trajs(cfg.n_traj);
      parallel_for(cfg.n_traj, cfg.threads, [&](int k) {
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(k));
        trajs[k] = run_trajectory(psi0, setup.t_final, setup.h, setup.channels, setup.config,
                                  rng, setup.plan);
      });

      // Per-time stats over trajectories (degenerate but well-defined for n=1).
      const auto n_rec = static_cast<Eigen::Index>(trajs[0].times.size());
      std::vector<std::string> header = {"t", "mean_sigma2_a", "var_sigma2_a", "ci95",
                                         "mean_n_expect", "var_n_expect", "ci95_n_expect"};
      std::vector<std::vector<double>> rows;
      rows.reserve(n_rec);
      for (Eigen::Index r = 0; r < n_rec; ++r) {
        std::vector<double> row = {trajs[0].times[r]};
        for (Eigen::Index o = 0; o < 2; ++o) {
          RunningStats stats;
          for (int k = 0; k < cfg.n_traj; ++k) stats.add(trajs[k].values(r, o));
          const double var = stats.variance();
          row.push_back(stats.mean);
          row.push_back(var);
          row.push_back(cfg.n_traj > 1
                            ? 1.96 * std::sqrt(var / static_cast<double>(cfg.n_traj))
                            : 0.0);
        }
        rows.push_back(std::move(row));
      }
      write_csv(out_file(cfg, cfg.preset_name + "_lambda" + lambda_tag + "_" + pol.slug + ".csv"),
                header, rows);

      const StationaryStats st = window_stats(trajs[0].times, trajs[0].values, 0, t_window);
      std::ostringstream line;
      line << fmt_g(lambda) << ',' << pol.token << ',' << fmt_e(st.mean) << ','
           << fmt_e(st.variance) << ',' << fmt_e(st.naive_se) << ',' << fmt_e(st.split_gap);
      summary_lines.push_back(line.str());

      for (const auto& tr : trajs) max_tail = std::max(max_tail, tr.max_tail_population);
    }
  }

  std::ofstream out(out_file(cfg, cfg.preset_name + "_summary.txt"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write summary");
  for (const auto& line : summary_lines) out << line << "\r\n";
  run_fields.emplace_back("run_max_tail_population", fmt_e(max_tail));
}

}  // namespace

PolicySpec parse_policy_token(const std::string& token) {
  std::string t = token;
  if (t == "qsd") t = "fixed:0";
  if (t == "real") t = "fixed:1";
  if (t == "imag") t = "fixed:-1";
  const auto colon = t.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("policy token '" + token + "' must look like kind:args");
  }
  const std::string kind = t.substr(0, colon);
  const std::string args = t.substr(colon + 1);
  PolicySpec spec{CorrelationPolicy::fixed(Complex(0.0, 0.0)), "", ""};
  try {
    if (kind == "fixed") {
      const auto comma = args.find(',');
      Complex c;
      if (comma == std::string::npos) {
        c = Complex(std::stod(args), 0.0);
      } else {
        c = Complex(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
      }
      spec.policy = CorrelationPolicy::fixed(c);
      spec.token = "fixed:" + fmt_complex(c);
    } else if (kind == "cov") {
      const double r = std::stod(args);
      spec.policy = CorrelationPolicy::covariance_phase(r);
      spec.token = "cov:" + fmt_g(r);
    } else if (kind == "squeezed") {
      const double r = std::stod(args);
      spec.policy = CorrelationPolicy::squeezed_phase(r);
      spec.token = "squeezed:" + fmt_g(r);
    } else {
      throw std::invalid_argument("unknown policy kind '" + kind + "'");
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    throw std::invalid_argument("policy token '" + token + "': " + e.what());
  }
  spec.slug = slugify(spec.token);
  return spec;
}

StateVector initial_state(const ExperimentConfig& cfg) {
  switch (cfg.preset) {
    case Preset::kFig1:
      return fock_state(cfg.dim, cfg.fock_n);
    case Preset::kFig2:
    case Preset::kFig4: {
      if (cfg.fock_n < 0 || cfg.fock_n >= cfg.dim || cfg.fock_n2 < 0 || cfg.fock_n2 >= cfg.dim) {
        throw ConfigError("fock indices out of range for dim");
      }
      Vector amps = Vector::Zero(cfg.dim);
      amps[cfg.fock_n] = 1.0;
      amps[cfg.fock_n2] = 1.0;
      return StateVector(std::move(amps));
    }
    case Preset::kFig3:
      return cat_state(cfg.dim, Complex(cfg.cat_alpha, 0.0));
    case Preset::kFig5a:
    case Preset::kFig5b:
      throw std::logic_error("fig5 builds per-lambda initial states internally");
    case Preset::kHermitianRates: {
      Vector amps = Vector::Zero(cfg.dim);
      amps[0] = 1.0;
      amps[1] = 1.0;
      return StateVector(std::move(amps));
    }
    case Preset::kSqueezingDecay:
      return squeezed_state(cfg.dim, SqueezedParams{cfg.gamma0, cfg.alpha0});
    case Preset::kOracleCheck:
      return fock_state(cfg.dim, 1);
  }
  throw std::logic_error("unreachable");
}

ExperimentConfig parse_config(const std::string& text) {
  const std::vector<Entry> entries = tokenize(text);

  // preset and paper_scale steer the defaults, so resolve them first
  const Entry* preset_entry = nullptr;
  bool paper_scale = false;
  for (const Entry& e : entries) {
    if (e.key == "preset") preset_entry = &e;
    if (e.key == "paper_scale") paper_scale = to_bool(e);
  }
  if (preset_entry == nullptr) throw ConfigError("missing required key 'preset'");
  for (const Entry& e : entries) {
    if (e.key.rfind("run_", 0) == 0) continue;
    if (std::find(known_keys().begin(), known_keys().end(), e.key) == known_keys().end()) {
      std::ostringstream msg;
      msg << "line " << e.line << ": unknown key '" << e.key << "'";
      throw ConfigError(msg.str());
    }
  }

  ExperimentConfig cfg;
  cfg.preset_name = preset_entry->value;
  cfg.preset = preset_from_name(preset_entry->value, preset_entry->line);
  cfg.paper_scale = paper_scale;
  apply_defaults(cfg);
  for (const Entry& e : entries) apply_entry(cfg, e);
  validate(cfg);
  build_resolved(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config_file(path, ConfigOverrides{});
}

ExperimentConfig parse_config_file(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  if (overrides.paper_scale) text += "\npaper_scale = true";
  if (overrides.seed) text += "\nseed = " + std::to_string(*overrides.seed);
  if (overrides.n_traj) text += "\nn_traj = " + std::to_string(*overrides.n_traj);
  if (overrides.threads) text += "\nthreads = " + std::to_string(*overrides.threads);
  if (overrides.dt) text += "\ndt = " + fmt_g(*overrides.dt);
  if (overrides.output_path) text += "\noutput_path = " + *overrides.output_path;
  return parse_config(text);
}

int run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_path);
  std::vector<std::pair<std::string, std::string>> run_fields;
  switch (cfg.preset) {
    case Preset::kOracleCheck:
      run_oracle_check(cfg, run_fields);
      break;
    case Preset::kFig5a:
    case Preset::kFig5b:
      run_kicked(cfg, run_fields);
      break;
    default:
      run_ensemble_preset(cfg, run_fields);
      break;
  }
  write_manifest(cfg, run_fields);
  return 0;
}

}  // namespace unravel
