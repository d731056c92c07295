#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "arbproj/constraints.hpp"
#include "arbproj/signed_measure.hpp"

namespace arbproj {

/// min c.x  s.t.  A x = b,  x >= lower. Components of lower may be -inf (free).
struct LpProblem {
  Eigen::VectorXd objective;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  Eigen::VectorXd lower;

  std::size_t variables() const noexcept { return static_cast<std::size_t>(objective.size()); }
};

enum class LpStatus { optimal, infeasible, unbounded };

const char* to_string(LpStatus status) noexcept;

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;
  double objective_value = 0.0;
  std::size_t iterations = 0;
  Eigen::VectorXd duals;          ///< one per equality row
  Eigen::VectorXd reduced_costs;  ///< c - A^T y, one per variable
  double infeasibility = 0.0;     ///< phase-one optimum, sum of artificials
};

struct LpOptions {
  std::size_t max_variables = 5000;
  std::size_t max_iterations = 1000000;
  std::size_t refactor_every = 100;
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-11;
};

/// Dense revised simplex, two phases, Bland's rule. Throws Error(size_limit)
/// above the variable cap.
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {});

struct TransportSolution {
  Eigen::MatrixXd coupling;  ///< M*, N x N
  Eigen::VectorXd mu;        ///< M* 1 - nu^-
  double value = 0.0;        ///< <M*, D>
  LpSolution lp;
};

/// Exact projection: min <M, D> over couplings with M 1 >= nu^-,
/// A(M 1 - nu^-) = b and M^T 1 = nu^+. Throws Error(kmax_too_small) when the
/// program is infeasible.
TransportSolution solve_p_prime(const Eigen::MatrixXd& distance, const JointSignedMeasure& nu,
                                const ConstraintSystem& system, const LpOptions& options = {});

/// argmin |x - target|^2 subject to A x = b, A of full row rank. Throws
/// Error(rank) otherwise.
Eigen::VectorXd solve_eq_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& target);

}  // namespace arbproj
