#include "unravel/master.hpp"

#include <cmath>
#include <sstream>

namespace unravel {

namespace {
constexpr Complex kImag{0.0, 1.0};
}

void validate_density(const DensityMatrix& rho, double herm_tol, double trace_tol,
                      double eig_tol) {
  const auto& m = rho.rho;
  if (m.rows() != m.cols()) throw IntegratorInstabilityError("density matrix is not square");
  const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (herm > herm_tol) {
    std::ostringstream msg;
    msg << "density matrix hermiticity defect " << herm;
    throw IntegratorInstabilityError(msg.str());
  }
  const double trace_defect = std::abs(m.trace() - Complex(1.0, 0.0));
  if (trace_defect > trace_tol) {
    std::ostringstream msg;
    msg << "density matrix trace defect " << trace_defect;
    throw IntegratorInstabilityError(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()),
                                                     Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -eig_tol) {
    std::ostringstream msg;
    msg << "density matrix minimum eigenvalue " << min_eig;
    throw IntegratorInstabilityError(msg.str());
  }
}

Eigen::MatrixXcd lindblad_rhs(const Eigen::MatrixXcd& rho, const Operator* h,
                              const std::vector<LindbladChannel>& channels) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("rho must be square");
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(rho.rows(), rho.cols());
  if (h != nullptr) {
    if (h->rows() != rho.rows()) throw std::invalid_argument("Hamiltonian dimension mismatch");
    out -= kImag * (*h * rho - rho * *h);
  }
  for (const LindbladChannel& ch : channels) {
    if (ch.op.rows() != rho.rows()) throw std::invalid_argument("channel dimension mismatch");
    out += ch.op * rho * ch.op.adjoint();
    out -= 0.5 * (ch.op_dag_op * rho + rho * ch.op_dag_op);
  }
  return out;
}

const Eigen::MatrixXcd& MasterSeries::at_time(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) < 1e-9 * std::max(1.0, std::abs(t))) return rhos[i];
  }
  throw std::invalid_argument("requested time is not among the recorded outputs");
}

MasterSeries evolve(const DensityMatrix& rho0, double t_final, const Hamiltonian& h,
                    const std::vector<LindbladChannel>& channels, double dt,
                    double output_stride) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (t_final < 0.0) throw std::invalid_argument("t_final must be >= 0");
  const auto n_steps = static_cast<long long>(std::llround(t_final / dt));
  if (std::abs(n_steps * dt - t_final) > 1e-9 * std::max(1.0, t_final)) {
    throw std::invalid_argument("t_final must be an integer multiple of dt");
  }
  long long record_every = 1;
  if (output_stride > 0.0) {
    record_every = std::llround(output_stride / dt);
    if (record_every < 1 ||
        std::abs(record_every * dt - output_stride) > 1e-9 * std::max(1.0, output_stride)) {
      throw std::invalid_argument("output stride must be an integer multiple of dt");
    }
  }
  if (n_steps % record_every != 0) {
    throw std::invalid_argument("t_final must be an integer multiple of the output stride");
  }

  validate_density(rho0);
  MasterSeries series;
  Eigen::MatrixXcd rho = rho0.rho;

  auto rhs_at = [&](double t, const Eigen::MatrixXcd& r) {
    const Operator* hmat = h ? h(t) : nullptr;
    return lindblad_rhs(r, hmat, channels);
  };
  auto record = [&](long long k) {
    series.times.push_back(k * dt);
    series.rhos.push_back(rho);
    validate_density(DensityMatrix{rho});
  };

  for (long long k = 0; k < n_steps; ++k) {
    if (k % record_every == 0) record(k);
    const double t = k * dt;
    const Eigen::MatrixXcd k1 = rhs_at(t, rho);
    const Eigen::MatrixXcd k2 = rhs_at(t + 0.5 * dt, rho + (0.5 * dt) * k1);
    const Eigen::MatrixXcd k3 = rhs_at(t + 0.5 * dt, rho + (0.5 * dt) * k2);
    const Eigen::MatrixXcd k4 = rhs_at(t + dt, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  record(n_steps);
  return series;
}

double trace_distance(const Eigen::MatrixXcd& rho1, const Eigen::MatrixXcd& rho2) {
  if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols()) {
    throw std::invalid_argument("density matrices must share dimensions");
  }
  const Eigen::MatrixXcd diff = rho1 - rho2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (diff + diff.adjoint()),
                                                     Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace unravel
