#include "selftune/cost.hpp"

#include <Eigen/Eigenvalues>

namespace selftune {

namespace {

// Products with the (possibly diagonal) dynamics matrix.
struct Dynamics {
  bool diagonal;
  const Vector& d;
  const Matrix& A;

  // A' M A
  Matrix congruence(const Matrix& M) const {
    if (diagonal) return (d.asDiagonal() * M) * d.asDiagonal();
    return A.transpose() * M * A;
  }
  // A M A'
  Matrix sandwich(const Matrix& M) const {
    if (diagonal) return (d.asDiagonal() * M) * d.asDiagonal();
    return A * M * A.transpose();
  }
  // A M
  Matrix left(const Matrix& M) const {
    if (diagonal) return d.asDiagonal() * M;
    return A * M;
  }
  // A' M
  Matrix left_transposed(const Matrix& M) const {
    if (diagonal) return d.asDiagonal() * M;
    return A.transpose() * M;
  }
  // M A
  Matrix right(const Matrix& M) const {
    if (diagonal) return M * d.asDiagonal();
    return M * A;
  }
};

}  // namespace

CostPredictor::CostPredictor(const LinearNetworkSystem& system, const CostParameters& params)
    : system_(system), params_(params) {
  params_.validate(system_);
  const Matrix& A = system_.A();
  const auto n = system_.n();
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  diagonal_ = (A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
  if (diagonal_) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    basis_ = es.eigenvectors();
    a_diag_ = es.eigenvalues();
  } else {
    basis_ = Matrix::Identity(n, n);
    a_diag_ = Vector::Zero(n);
  }
  A_ = diagonal_ ? Matrix(a_diag_.asDiagonal()) : A;
  act_pool_ = basis_.transpose() * system_.actuator_pool();
  sen_pool_ = system_.sensor_pool() * basis_;
  Q_ = symmetrize(basis_.transpose() * params_.Q * basis_);
  Q_T_ = symmetrize(basis_.transpose() * params_.Q_T * basis_);
  W_ = symmetrize(basis_.transpose() * system_.W() * basis_);
}

CostPredictor::State CostPredictor::prepare(const Vector& x_hat, const Matrix& E_t) const {
  const auto n = system_.n();
  if (x_hat.size() != n || E_t.rows() != n || E_t.cols() != n)
    throw std::invalid_argument("CostPredictor: state dimension mismatch");
  if (!diagonal_) return {x_hat, symmetrize(E_t), {}};
  return {basis_.transpose() * x_hat, symmetrize(basis_.transpose() * E_t * basis_), {}};
}

const CostPredictor::ActuatorTerms& CostPredictor::actuator_terms(const IndexSet& actuators) const {
  if (auto it = actuator_terms_.find(actuators); it != actuator_terms_.end()) return it->second;
  // Bound memory on long runs; entries are cheap to rebuild.
  if (actuator_terms_.size() >= 2048) actuator_terms_.clear();

  const std::size_t T = params_.horizon;
  const Dynamics dyn{diagonal_, a_diag_, A_};
  const Matrix B = select_columns(act_pool_, actuators);
  const Matrix R = principal_submatrix(params_.R1, actuators);
  const auto a = B.cols();

  ActuatorTerms terms;
  terms.G.resize(T);
  Matrix P = Q_T_;
  for (std::size_t tau = T; tau-- > 0;) {
    terms.noise += P.cwiseProduct(W_).sum();
    Matrix P_new = dyn.congruence(P) + Q_;
    if (a > 0) {
      const Matrix BtP = B.transpose() * P;
      const Matrix BtPA = dyn.right(BtP);
      Eigen::LLT<Matrix> llt(symmetrize(BtP * B + R));
      if (llt.info() != Eigen::Success) throw SolverError("B'PB + R is not positive definite");
      const Matrix K = llt.solve(BtPA);
      P_new.noalias() -= BtPA.transpose() * K;
      terms.G[tau] = llt.matrixU() * K;
    } else {
      terms.G[tau] = Matrix::Zero(0, P.rows());
    }
    P = symmetrize(P_new);
  }
  terms.P0 = std::move(P);
  return actuator_terms_.emplace(actuators, std::move(terms)).first->second;
}

const std::vector<Matrix>& CostPredictor::sensor_terms(const IndexSet& sensors,
                                                       const State& state) const {
  if (auto it = state.sensor_terms.find(sensors); it != state.sensor_terms.end())
    return it->second;

  const std::size_t T = params_.horizon;
  const auto n = system_.n();
  const Dynamics dyn{diagonal_, a_diag_, A_};
  const Matrix C = select_rows(sen_pool_, sensors);
  const auto s = C.rows();
  const double v = system_.v_var();

  // S[tau - 1] holds S_tau for tau = 1..T-1; S_0 = 0 contributes nothing.
  std::vector<Matrix> S;
  S.reserve(T > 0 ? T - 1 : 0);
  Matrix E = state.E;
  Matrix err = Matrix::Zero(n, n);
  for (std::size_t tau = 0; tau + 1 < T; ++tau) {
    if (s > 0) {
      const Matrix CE = C * E;
      Eigen::LLT<Matrix> llt(symmetrize(CE * C.transpose() + v * Matrix::Identity(s, s)));
      if (llt.info() != Eigen::Success)
        throw SolverError("innovation covariance C E C' + V is singular");
      const Matrix L = llt.solve(CE).transpose();
      // (I - L C) err (I - L C)' + v L L'
      Matrix X = err - L * (C * err);
      X -= (X * C.transpose()) * L.transpose();
      X.noalias() += v * L * L.transpose();
      err = symmetrize(dyn.sandwich(X) + W_);
      E = symmetrize(dyn.sandwich(E - L * CE) + W_);
    } else {
      err = symmetrize(dyn.sandwich(err) + W_);
      E = symmetrize(dyn.sandwich(E) + W_);
    }
    S.push_back(err);
  }
  return state.sensor_terms.emplace(sensors, std::move(S)).first->second;
}

double CostPredictor::predicted(const Architecture& arch, const State& state) const {
  arch.check_bounds(system_);
  const auto& act = actuator_terms(arch.actuators());
  const auto& S = sensor_terms(arch.sensors(), state);
  double J = state.x.dot(act.P0 * state.x) + act.noise;
  for (std::size_t tau = 1; tau < act.G.size(); ++tau) {
    const Matrix& G = act.G[tau];
    if (G.rows() > 0) J += (G * S[tau - 1]).cwiseProduct(G).sum();
  }
  return J;
}

CostBreakdown CostPredictor::total(const Architecture& arch, const Architecture& arch_prev,
                                   const State& state) const {
  CostBreakdown b;
  b.control = predicted(arch, state);
  b.running = running_cost(arch, params_);
  b.switching = switching_cost(arch, arch_prev, params_);
  b.total = b.control + b.running + b.switching;
  return b;
}

}  // namespace selftune
