#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/constraints.hpp"
#include "arbproj/signed_measure.hpp"

namespace arbproj {

struct GibbsKernel {
  Eigen::MatrixXd G;
  double epsilon = 1.0;
  std::size_t floored = 0;  ///< entries raised to the smallest normal double
};

GibbsKernel gibbs_kernel(const Eigen::MatrixXd& distance, double epsilon);

/// KL(M | G) = sum M log(M/G) - M + G, with 0 log 0 = 0; +inf if M has a
/// negative entry.
double kl_divergence(const Eigen::MatrixXd& M, const Eigen::MatrixXd& G);

/// H(M) = -sum M (log M - 1), with 0 log 0 = 0.
double entropy(const Eigen::MatrixXd& M);

/// Unique lambda with sum_p A_p x_p exp(lambda A_p) = rhs. Only the entries
/// with A_p != 0 need to be passed. Throws InstabilityError when the bracket
/// would need |lambda| max|A| > 700.
double root_find(std::span<const double> a, std::span<const double> x, double rhs, std::size_t row = 0);

/// KL proximal map of constraint r (0-based; the last two are the box and
/// fixed-marginal sets) applied to a positive vector.
Eigen::VectorXd prox_vector(std::size_t r, const Eigen::VectorXd& x, const ConstraintSystem& system,
                            const JointSignedMeasure& nu);

/// Right-hand sides b + A nu^- of the affine constraint sets.
Eigen::VectorXd affine_rhs(const ConstraintSystem& system, const JointSignedMeasure& nu);

/// max of the affine, box and fixed-marginal sup-norm violations.
double stopping_criterion(const Eigen::MatrixXd& M, const ConstraintSystem& system, const JointSignedMeasure& nu);
double stopping_criterion(const Eigen::VectorXd& row_sums, const Eigen::VectorXd& col_sums,
                          const ConstraintSystem& system, const JointSignedMeasure& nu);

/// Dual scalings: a^r = exp(lambda_r A_r) for the affine rows, then the box
/// and fixed-marginal vectors.
struct ScalingState {
  Eigen::VectorXd lambda;
  Eigen::VectorXd box;
  Eigen::VectorXd fixed;
};

struct HistoryRow {
  std::size_t n = 0;
  std::size_t substep = 0;  ///< 1-based substep at which E was measured
  double criterion = 0.0;
  double primal_kl = 0.0;
  double duality_gap = 0.0;
};

struct SinkhornOptions {
  double e_tol = 1e-4;
  std::size_t max_iters = 100000;
  bool record_history = true;
};

struct SinkhornReport {
  bool converged = false;
  std::size_t iterations = 0;
  double criterion = 0.0;
  std::vector<HistoryRow> history;
};

/// Multi-constrained Sinkhorn on the scalings only. Constraints are indexed
/// 0..R-1: the affine rows of the system, the box row, the fixed row.
class SinkhornSolver {
 public:
  using Observer = std::function<void(std::size_t n, std::size_t r, const SinkhornSolver&)>;

  SinkhornSolver(const GibbsKernel& kernel, const ConstraintSystem& system, const JointSignedMeasure& nu);

  std::size_t constraints() const noexcept { return affine_ + 2; }
  std::size_t iteration() const noexcept { return n_; }
  std::size_t substep() const noexcept { return r_; }

  /// Applies the next substep (1-based r = 1..R), advancing n when r wraps.
  void step();
  void sweep();

  /// Runs until E(n, R-1) < e_tol or max_iters. The final state is M_{n,R-1}.
  SinkhornReport run(const SinkhornOptions& options, const Observer& observer = {});

  const ScalingState& state() const noexcept { return state_; }
  /// Replaces the scalings, e.g. for warm starts; resets the substep counter.
  void set_state(const ScalingState& state);

  /// Row scaling prod_{r<R} a^r and column scaling a^R of the current iterate.
  Eigen::VectorXd row_scaling() const;
  const Eigen::VectorXd& col_scaling() const noexcept { return state_.fixed; }

  Eigen::MatrixXd coupling() const;
  Eigen::VectorXd row_sums() const;
  Eigen::VectorXd col_sums() const;
  double criterion() const;
  /// epsilon KL(M|G) of the current iterate, O(N) from the scalings.
  double primal() const;
  double dual() const;
  double duality_gap() const { return primal() - dual(); }
  /// <M, D> of the current iterate; D = -epsilon log G.
  double transport_cost(const Eigen::MatrixXd& distance) const;

 private:
  struct SparseRow {
    std::vector<Eigen::Index> index;
    std::vector<double> value;
  };

  void affine_step(std::size_t r);
  void box_step();
  void fixed_step();
  void refresh();
  void check_finite(std::size_t r) const;

  const GibbsKernel& kernel_;
  const ConstraintSystem& system_;
  const JointSignedMeasure& nu_;
  std::size_t affine_;
  std::vector<SparseRow> rows_;
  Eigen::VectorXd rhs_;
  ScalingState state_;
  Eigen::VectorXd p_;  // prod of a^1..a^{R-1}
  Eigen::VectorXd y_;  // G a^R
  double kernel_sum_ = 0.0;
  std::size_t n_ = 0;
  std::size_t r_ = 0;  // substeps done in iteration n_
};

struct SinkhornResult {
  Eigen::MatrixXd coupling;
  ScalingState state;
  SinkhornReport report;
  double duality_gap = 0.0;
  double primal = 0.0;
};

SinkhornResult sinkhorn_run(const GibbsKernel& kernel, const ConstraintSystem& system, const JointSignedMeasure& nu,
                            const SinkhornOptions& options = {}, const std::optional<ScalingState>& warm = {});

/// Full-matrix Dykstra iteration with KL projections; observer sees every X_{n,r}.
using DykstraObserver = std::function<void(std::size_t n, std::size_t r, const Eigen::MatrixXd& X,
                                           const std::vector<Eigen::MatrixXd>& q)>;
Eigen::MatrixXd dykstra_run(const GibbsKernel& kernel, const ConstraintSystem& system, const JointSignedMeasure& nu,
                            std::size_t sweeps, const DykstraObserver& observer = {});

double duality_gap(const Eigen::MatrixXd& M, const ScalingState& state, const GibbsKernel& kernel,
                   const ConstraintSystem& system, const JointSignedMeasure& nu);

/// Mass of M on kernel entries that were floored. Anything above the stopping
/// tolerance means the solve answered a different problem than this epsilon.
double underflow_mass(const GibbsKernel& kernel, const Eigen::MatrixXd& M);

struct SweepRow {
  double epsilon = 0.0;
  double cost = 0.0;
  double criterion = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::string error;  ///< empty on success; set on root-finder overflow or kernel underflow
};

struct SweepOptions {
  double e_tol = 1e-4;
  std::size_t max_iters = 100000;
  bool warm_start = true;
};

std::vector<SweepRow> epsilon_sweep(const Eigen::MatrixXd& distance, const JointSignedMeasure& nu,
                                    const ConstraintSystem& system, std::span<const double> eps_list,
                                    const SweepOptions& options = {});

/// Scales dual potentials so that u = epsilon log a is preserved.
ScalingState rescale(const ScalingState& state, double eps_from, double eps_to);

}  // namespace arbproj
