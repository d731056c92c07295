#include "arbproj/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "arbproj/error.hpp"

namespace arbproj {

const char* to_string(LpStatus status) noexcept {
  switch (status) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

namespace {

using Eigen::Index;

// Column j of the standard-form program maps back to source variable
// source[j] with coefficient sign[j] (free variables are split in two).
struct StandardForm {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<Index> source;
  std::vector<double> sign;
  Eigen::VectorXd row_sign;
  Eigen::VectorXd offset;  // finite lower bounds, 0 for free variables
};

StandardForm standardize(const LpProblem& p) {
  const Index n = p.objective.size();
  const Index m = p.eq_matrix.rows();
  StandardForm s;
  s.offset = Eigen::VectorXd::Zero(n);
  for (Index j = 0; j < n; ++j) {
    if (std::isfinite(p.lower[j])) s.offset[j] = p.lower[j];
  }
  for (Index j = 0; j < n; ++j) {
    s.source.push_back(j);
    s.sign.push_back(1.0);
  }
  for (Index j = 0; j < n; ++j) {
    if (!std::isfinite(p.lower[j])) {
      s.source.push_back(j);
      s.sign.push_back(-1.0);
    }
  }
  const auto cols = static_cast<Index>(s.source.size());
  s.A.resize(m, cols);
  s.c.resize(cols);
  for (Index k = 0; k < cols; ++k) {
    const Index j = s.source[static_cast<std::size_t>(k)];
    const double sg = s.sign[static_cast<std::size_t>(k)];
    s.A.col(k) = sg * p.eq_matrix.col(j);
    s.c[k] = sg * p.objective[j];
  }
  s.b = p.eq_rhs - p.eq_matrix * s.offset;
  s.row_sign = Eigen::VectorXd::Ones(m);
  for (Index i = 0; i < m; ++i) {
    if (s.b[i] < 0.0) {
      s.row_sign[i] = -1.0;
      s.b[i] = -s.b[i];
      s.A.row(i) = -s.A.row(i);
    }
  }
  return s;
}

class Simplex {
 public:
  Simplex(const StandardForm& sf, const LpOptions& opt)
      : sf_(sf), opt_(opt), m_(sf.A.rows()), n_(sf.A.cols()), basis_(static_cast<std::size_t>(m_)),
        basic_(static_cast<std::size_t>(n_ + m_), false), barred_(static_cast<std::size_t>(n_ + m_), false) {
    for (Index i = 0; i < m_; ++i) {
      basis_[static_cast<std::size_t>(i)] = n_ + i;
      basic_[static_cast<std::size_t>(n_ + i)] = true;
    }
    binv_ = Eigen::MatrixXd::Identity(m_, m_);
    xb_ = sf_.b;
    cost_ = Eigen::VectorXd::Zero(n_ + m_);
  }

  std::size_t iterations() const noexcept { return iterations_; }

  // Runs the current phase to optimality; returns false when unbounded.
  bool run() {
    Eigen::VectorXd cb(m_);
    Eigen::VectorXd u(m_);
    std::size_t since_refactor = 0;
    for (;;) {
      if (iterations_ >= opt_.max_iterations) {
        throw Error(ErrorCode::parameter, "simplex iteration limit reached");
      }
      for (Index i = 0; i < m_; ++i) cb[i] = cost_[basis_[static_cast<std::size_t>(i)]];
      const Eigen::VectorXd y = binv_.transpose() * cb;

      Index entering = -1;
      for (Index j = 0; j < n_ + m_; ++j) {
        if (basic_[static_cast<std::size_t>(j)] || barred_[static_cast<std::size_t>(j)]) continue;
        if (reduced_cost(j, y) < -opt_.optimality_tol) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return true;

      column(entering, u);
      Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m_; ++i) {
        if (u[i] <= opt_.pivot_tol) continue;
        const double ratio = std::max(xb_[i], 0.0) / u[i];
        const double slack = 1e-12 * std::max(1.0, best);
        if (leave < 0 || ratio < best - slack) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + slack && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(entering, leave, u, best);
      ++iterations_;
      if (++since_refactor >= opt_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
    }
  }

  void set_costs(const Eigen::VectorXd& c) { cost_ = c; }

  double basic_cost() const {
    double v = 0.0;
    for (Index i = 0; i < m_; ++i) v += cost_[basis_[static_cast<std::size_t>(i)]] * xb_[i];
    return v;
  }

  // Pivots basic artificials out where a structural column can replace them;
  // the remaining ones sit on redundant rows. All artificials are then barred.
  void drive_out_artificials() {
    Eigen::VectorXd u(m_);
    for (Index r = 0; r < m_; ++r) {
      if (basis_[static_cast<std::size_t>(r)] < n_) continue;
      const Eigen::RowVectorXd rho = binv_.row(r);
      for (Index j = 0; j < n_; ++j) {
        if (basic_[static_cast<std::size_t>(j)]) continue;
        if (std::abs(rho.dot(sf_.A.col(j))) > 1e-7) {
          column(j, u);
          pivot(j, r, u, std::max(xb_[r], 0.0) / u[r]);
          break;
        }
      }
    }
    for (Index j = n_; j < n_ + m_; ++j) barred_[static_cast<std::size_t>(j)] = true;
    refactor();
  }

  Eigen::VectorXd primal() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    for (Index i = 0; i < m_; ++i) {
      const Index j = basis_[static_cast<std::size_t>(i)];
      if (j < n_) x[j] = std::max(xb_[i], 0.0);
    }
    return x;
  }

  Eigen::VectorXd duals() const {
    Eigen::VectorXd cb(m_);
    for (Index i = 0; i < m_; ++i) cb[i] = cost_[basis_[static_cast<std::size_t>(i)]];
    return binv_.transpose() * cb;
  }

 private:
  double reduced_cost(Index j, const Eigen::VectorXd& y) const {
    if (j < n_) return cost_[j] - sf_.A.col(j).dot(y);
    return cost_[j] - y[j - n_];
  }

  void column(Index j, Eigen::VectorXd& u) const {
    if (j < n_) {
      u.noalias() = binv_ * sf_.A.col(j);
    } else {
      u = binv_.col(j - n_);
    }
  }

  void pivot(Index entering, Index r, const Eigen::VectorXd& u, double theta) {
    xb_ -= theta * u;
    xb_[r] = theta;
    const double ur = u[r];
    binv_.row(r) /= ur;
    Eigen::VectorXd w = u;
    w[r] = 0.0;
    binv_.noalias() -= w * binv_.row(r);
    basic_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)])] = false;
    basis_[static_cast<std::size_t>(r)] = entering;
    basic_[static_cast<std::size_t>(entering)] = true;
  }

  void refactor() {
    Eigen::MatrixXd B(m_, m_);
    for (Index i = 0; i < m_; ++i) {
      const Index j = basis_[static_cast<std::size_t>(i)];
      if (j < n_) {
        B.col(i) = sf_.A.col(j);
      } else {
        B.col(i) = Eigen::VectorXd::Unit(m_, j - n_);
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
    xb_ = binv_ * sf_.b;
  }

  const StandardForm& sf_;
  const LpOptions& opt_;
  Index m_;
  Index n_;
  std::vector<Index> basis_;
  std::vector<bool> basic_;
  std::vector<bool> barred_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  Eigen::VectorXd cost_;
  std::size_t iterations_ = 0;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options) {
  const Index n = problem.objective.size();
  if (problem.eq_matrix.cols() != n || problem.lower.size() != n ||
      problem.eq_matrix.rows() != problem.eq_rhs.size()) {
    throw Error(ErrorCode::parameter, "inconsistent linear program dimensions");
  }
  const StandardForm sf = standardize(problem);
  if (static_cast<std::size_t>(sf.A.cols()) > options.max_variables) {
    throw Error(ErrorCode::size_limit, "linear program has " + std::to_string(sf.A.cols()) +
                                           " variables, above the cap of " + std::to_string(options.max_variables) +
                                           "; use the entropic solver for instances this large");
  }
  const Index m = sf.A.rows();
  const Index cols = sf.A.cols();

  LpSolution sol;
  Simplex simplex(sf, options);
  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(cols + m);
  phase1.tail(m).setOnes();
  simplex.set_costs(phase1);
  simplex.run();
  sol.infeasibility = simplex.basic_cost();
  const double scale = std::max(1.0, sf.b.size() > 0 ? sf.b.cwiseAbs().maxCoeff() : 0.0);
  if (sol.infeasibility > options.feasibility_tol * scale) {
    sol.status = LpStatus::infeasible;
    sol.iterations = simplex.iterations();
    return sol;
  }

  simplex.drive_out_artificials();
  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(cols + m);
  phase2.head(cols) = sf.c;
  simplex.set_costs(phase2);
  const bool bounded = simplex.run();
  sol.iterations = simplex.iterations();
  if (!bounded) {
    sol.status = LpStatus::unbounded;
    return sol;
  }

  const Eigen::VectorXd xs = simplex.primal();
  sol.x = sf.offset;
  for (Index k = 0; k < cols; ++k) {
    sol.x[sf.source[static_cast<std::size_t>(k)]] += sf.sign[static_cast<std::size_t>(k)] * xs[k];
  }
  sol.duals = simplex.duals().cwiseProduct(sf.row_sign);
  sol.reduced_costs = problem.objective - problem.eq_matrix.transpose() * sol.duals;
  sol.objective_value = problem.objective.dot(sol.x);
  sol.status = LpStatus::optimal;
  return sol;
}

TransportSolution solve_p_prime(const Eigen::MatrixXd& distance, const JointSignedMeasure& nu,
                                const ConstraintSystem& system, const LpOptions& options) {
  const Index n = distance.rows();
  if (distance.cols() != n || nu.nu_plus.size() != n || nu.nu_minus.size() != n || system.A.cols() != n) {
    throw Error(ErrorCode::parameter, "transport program dimensions disagree");
  }
  const Index L = system.A.rows();
  const Index vars = n * n + n;
  const Index rows = n + L + n;
  const auto needed = static_cast<std::size_t>(vars);
  if (needed > options.max_variables) {
    throw Error(ErrorCode::size_limit, "exact projection needs " + std::to_string(needed) +
                                           " variables, above the cap of " + std::to_string(options.max_variables) +
                                           "; use the entropic solver for instances this large");
  }

  // Variables: M row-major (p * n + q), then the slack s = M 1 - nu^-.
  LpProblem lp;
  lp.objective = Eigen::VectorXd::Zero(vars);
  lp.eq_matrix = Eigen::MatrixXd::Zero(rows, vars);
  lp.eq_rhs = Eigen::VectorXd::Zero(rows);
  lp.lower = Eigen::VectorXd::Zero(vars);
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) {
      const Index v = p * n + q;
      lp.objective[v] = distance(p, q);
      lp.eq_matrix(p, v) = 1.0;
      lp.eq_matrix(n + L + q, v) = 1.0;
    }
    lp.eq_matrix(p, n * n + p) = -1.0;
    lp.eq_rhs[p] = nu.nu_minus[p];
  }
  lp.eq_matrix.block(n, n * n, L, n) = system.A;
  lp.eq_rhs.segment(n, L) = system.b;
  lp.eq_rhs.tail(n) = nu.nu_plus;

  TransportSolution out;
  out.lp = solve_lp(lp, options);
  if (out.lp.status != LpStatus::optimal) {
    throw Error(ErrorCode::kmax_too_small,
                std::string("exact projection is ") + to_string(out.lp.status) + "; k_max is too small for the constraints");
  }
  out.coupling.resize(n, n);
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) out.coupling(p, q) = out.lp.x[p * n + q];
  }
  out.mu = out.lp.x.tail(n);
  out.value = out.coupling.cwiseProduct(distance).sum();
  return out;
}

Eigen::VectorXd solve_eq_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& target) {
  if (A.cols() != target.size() || A.rows() != b.size()) {
    throw Error(ErrorCode::parameter, "least-squares dimensions disagree");
  }
  const Index L = A.rows();
  if (L == 0) return target;
  if (L > A.cols()) throw Error(ErrorCode::rank, "more constraints than unknowns");

  // Range-space solve: A A^T = P R^T R P^T from a pivoted QR of A^T.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  qr.setThreshold(1e-12);
  if (qr.rank() < L) {
    throw Error(ErrorCode::rank, "constraint matrix has rank " + std::to_string(qr.rank()) + " < " +
                                     std::to_string(L) + " rows");
  }
  const auto R = qr.matrixR().topLeftCorner(L, L).triangularView<Eigen::Upper>();
  const auto& P = qr.colsPermutation();
  auto normal_solve = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd v = P.transpose() * r;
    R.transpose().solveInPlace(v);
    R.solveInPlace(v);
    return Eigen::VectorXd(P * v);
  };

  Eigen::VectorXd x = target - A.transpose() * normal_solve(A * target - b);
  for (int refine = 0; refine < 2; ++refine) {
    const Eigen::VectorXd r = A * x - b;
    if (!r.allFinite()) throw Error(ErrorCode::singular, "least-squares solve produced non-finite values");
    x -= A.transpose() * normal_solve(r);
  }
  return x;
}

}  // namespace arbproj
