#include "arbproj/entropic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "arbproj/error.hpp"

namespace arbproj {

namespace {

using Eigen::Index;

constexpr double kExpCap = 700.0;

double xlogx_over(double m, double g) { return m > 0.0 ? m * std::log(m / g) : 0.0; }

}  // namespace

GibbsKernel gibbs_kernel(const Eigen::MatrixXd& distance, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorCode::parameter, "epsilon must be positive");
  GibbsKernel k;
  k.epsilon = epsilon;
  k.G = (-distance.array() / epsilon).exp().matrix();
  const double floor = std::numeric_limits<double>::min();
  for (Index j = 0; j < k.G.cols(); ++j) {
    for (Index i = 0; i < k.G.rows(); ++i) {
      if (k.G(i, j) < floor) {
        k.G(i, j) = floor;
        ++k.floored;
      }
    }
  }
  return k;
}

double kl_divergence(const Eigen::MatrixXd& M, const Eigen::MatrixXd& G) {
  if (M.rows() != G.rows() || M.cols() != G.cols()) throw Error(ErrorCode::parameter, "KL arguments differ in shape");
  double s = 0.0;
  for (Index j = 0; j < M.cols(); ++j) {
    for (Index i = 0; i < M.rows(); ++i) {
      const double m = M(i, j);
      if (m < 0.0) return std::numeric_limits<double>::infinity();
      s += xlogx_over(m, G(i, j)) - m + G(i, j);
    }
  }
  return s;
}

double entropy(const Eigen::MatrixXd& M) {
  double h = 0.0;
  for (Index j = 0; j < M.cols(); ++j) {
    for (Index i = 0; i < M.rows(); ++i) {
      const double m = M(i, j);
      if (m > 0.0) h -= m * (std::log(m) - 1.0);
    }
  }
  return h;
}

double root_find(std::span<const double> a, std::span<const double> x, double rhs, std::size_t row) {
  if (a.size() != x.size() || a.empty()) throw Error(ErrorCode::parameter, "root_find needs a nonempty row");
  double amax = 0.0;
  for (double v : a) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) throw Error(ErrorCode::parameter, "constraint row is zero");

  auto eval = [&](double lam, double& deriv) {
    double g = -rhs;
    deriv = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
      const double t = x[p] * std::exp(lam * a[p]);
      g += a[p] * t;
      deriv += a[p] * a[p] * t;
    }
    return g;
  };
  const double tol = 1e-12 * std::max(1.0, std::abs(rhs));
  double d = 0.0;
  const double g0 = eval(0.0, d);
  if (std::abs(g0) <= tol) return 0.0;

  // g is increasing: grow the bracket away from 0 on the side of the root.
  const double dir = g0 < 0.0 ? 1.0 : -1.0;
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0 / amax;
  double far = 0.0;
  for (;;) {
    far = dir * step;
    if (std::abs(far) * amax > kExpCap) {
      throw InstabilityError(row, "root of constraint " + std::to_string(row) +
                                      " lies beyond the exponent range; increase epsilon");
    }
    const double g = eval(far, d);
    if ((dir > 0.0 && g >= 0.0) || (dir < 0.0 && g <= 0.0)) break;
    step *= 4.0;
  }
  lo = dir > 0.0 ? far / 4.0 : far;
  hi = dir > 0.0 ? far : far / 4.0;
  if (step == 1.0 / amax) (dir > 0.0 ? lo : hi) = 0.0;

  double lam = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const double g = eval(lam, d);
    if (std::abs(g) <= tol) return lam;
    if (g < 0.0) {
      lo = lam;
    } else {
      hi = lam;
    }
    double next = d > 0.0 ? lam - g / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == lam || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lam))) {
      return next;
    }
    lam = next;
  }
  return lam;
}

Eigen::VectorXd affine_rhs(const ConstraintSystem& system, const JointSignedMeasure& nu) {
  return system.b + system.A * nu.nu_minus;
}

Eigen::VectorXd prox_vector(std::size_t r, const Eigen::VectorXd& x, const ConstraintSystem& system,
                            const JointSignedMeasure& nu) {
  const std::size_t affine = system.size();
  if (r == affine + 1) return nu.nu_plus;
  if (r == affine) return x.cwiseMax(nu.nu_minus);
  if (r > affine + 1) throw Error(ErrorCode::index, "constraint index out of range");
  std::vector<double> a;
  std::vector<double> xs;
  std::vector<Index> idx;
  for (Index p = 0; p < x.size(); ++p) {
    const double v = system.A(static_cast<Index>(r), p);
    if (v != 0.0) {
      a.push_back(v);
      xs.push_back(x[p]);
      idx.push_back(p);
    }
  }
  const double rhs = system.b[static_cast<Index>(r)] + system.A.row(static_cast<Index>(r)).dot(nu.nu_minus);
  const double lam = root_find(a, xs, rhs, r);
  Eigen::VectorXd out = x;
  for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] *= std::exp(lam * a[k]);
  return out;
}

double stopping_criterion(const Eigen::VectorXd& row_sums, const Eigen::VectorXd& col_sums,
                          const ConstraintSystem& system, const JointSignedMeasure& nu) {
  const Eigen::VectorXd mu = row_sums - nu.nu_minus;
  double e = 0.0;
  if (system.size() > 0) e = (system.A * mu - system.b).cwiseAbs().maxCoeff();
  e = std::max(e, (nu.nu_minus - row_sums).cwiseMax(0.0).maxCoeff());
  e = std::max(e, (col_sums - nu.nu_plus).cwiseAbs().maxCoeff());
  return e;
}

double stopping_criterion(const Eigen::MatrixXd& M, const ConstraintSystem& system, const JointSignedMeasure& nu) {
  return stopping_criterion(Eigen::VectorXd(M.rowwise().sum()), Eigen::VectorXd(M.colwise().sum().transpose()),
                            system, nu);
}

SinkhornSolver::SinkhornSolver(const GibbsKernel& kernel, const ConstraintSystem& system,
                               const JointSignedMeasure& nu)
    : kernel_(kernel), system_(system), nu_(nu), affine_(system.size()) {
  const Index n = kernel.G.rows();
  if (kernel.G.cols() != n || system.A.cols() != n || nu.nu_plus.size() != n || nu.nu_minus.size() != n) {
    throw Error(ErrorCode::parameter, "Sinkhorn inputs disagree in size");
  }
  rows_.resize(affine_);
  for (std::size_t r = 0; r < affine_; ++r) {
    for (Index p = 0; p < n; ++p) {
      const double v = system.A(static_cast<Index>(r), p);
      if (v != 0.0) {
        rows_[r].index.push_back(p);
        rows_[r].value.push_back(v);
      }
    }
    if (rows_[r].index.empty()) throw Error(ErrorCode::parameter, "constraint row " + std::to_string(r) + " is zero");
  }
  rhs_ = affine_rhs(system, nu);
  kernel_sum_ = kernel.G.sum();
  state_.lambda = Eigen::VectorXd::Zero(static_cast<Index>(affine_));
  state_.box = Eigen::VectorXd::Ones(n);
  state_.fixed = Eigen::VectorXd::Ones(n);
  r_ = constraints();
  refresh();
}

void SinkhornSolver::set_state(const ScalingState& state) {
  if (state.lambda.size() != static_cast<Index>(affine_) || state.box.size() != state_.box.size() ||
      state.fixed.size() != state_.fixed.size()) {
    throw Error(ErrorCode::parameter, "scaling state does not match the problem");
  }
  state_ = state;
  n_ = 0;
  r_ = constraints();
  refresh();
}

void SinkhornSolver::refresh() {
  p_ = state_.box;
  for (std::size_t r = 0; r < affine_; ++r) {
    const double lam = state_.lambda[static_cast<Index>(r)];
    if (lam == 0.0) continue;
    const auto& row = rows_[r];
    for (std::size_t k = 0; k < row.index.size(); ++k) p_[row.index[k]] *= std::exp(lam * row.value[k]);
  }
  y_.noalias() = kernel_.G * state_.fixed;
}

void SinkhornSolver::check_finite(std::size_t r) const {
  const bool ok = p_.allFinite() && y_.allFinite() && (p_.array() > 0.0).all() && (y_.array() > 0.0).all();
  if (!ok) {
    throw InstabilityError(r, "scalings left the floating-point range at constraint " + std::to_string(r) +
                                  "; increase epsilon");
  }
}

void SinkhornSolver::affine_step(std::size_t r) {
  const auto& row = rows_[r];
  const double old = state_.lambda[static_cast<Index>(r)];
  std::vector<double> x(row.index.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Index p = row.index[k];
    x[k] = p_[p] * std::exp(-old * row.value[k]) * y_[p];
  }
  const double lam = root_find(row.value, x, rhs_[static_cast<Index>(r)], r);
  state_.lambda[static_cast<Index>(r)] = lam;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Index p = row.index[k];
    p_[p] *= std::exp((lam - old) * row.value[k]);
  }
}

void SinkhornSolver::box_step() {
  const Eigen::ArrayXd base = p_.array() / state_.box.array();
  const Eigen::ArrayXd x = base * y_.array();
  state_.box = (nu_.nu_minus.array() / x).max(1.0).matrix();
  p_ = (base * state_.box.array()).matrix();
}

void SinkhornSolver::fixed_step() {
  const Eigen::VectorXd z = kernel_.G.transpose() * p_;
  state_.fixed = nu_.nu_plus.cwiseQuotient(z);
  y_.noalias() = kernel_.G * state_.fixed;
}

void SinkhornSolver::step() {
  if (r_ == constraints()) {
    ++n_;
    r_ = 0;
    refresh();
  }
  const std::size_t r = r_;
  if (r < affine_) {
    affine_step(r);
  } else if (r == affine_) {
    box_step();
  } else {
    fixed_step();
  }
  check_finite(r);
  ++r_;
}

void SinkhornSolver::sweep() {
  do {
    step();
  } while (r_ != constraints());
}

Eigen::VectorXd SinkhornSolver::row_scaling() const { return p_; }

Eigen::MatrixXd SinkhornSolver::coupling() const {
  return p_.asDiagonal() * kernel_.G * state_.fixed.asDiagonal();
}

Eigen::VectorXd SinkhornSolver::row_sums() const { return p_.cwiseProduct(y_); }

Eigen::VectorXd SinkhornSolver::col_sums() const {
  return state_.fixed.cwiseProduct(kernel_.G.transpose() * p_);
}

double SinkhornSolver::criterion() const { return stopping_criterion(row_sums(), col_sums(), system_, nu_); }

double SinkhornSolver::primal() const {
  const Eigen::VectorXd rows = row_sums();
  const Eigen::VectorXd cols = col_sums();
  const double kl = rows.dot(p_.array().log().matrix()) + cols.dot(state_.fixed.array().log().matrix()) -
                    rows.sum() + kernel_sum_;
  return kernel_.epsilon * kl;
}

double SinkhornSolver::dual() const {
  const double total = row_sums().sum();
  const double d = state_.lambda.dot(rhs_) + nu_.nu_minus.dot(state_.box.array().log().matrix()) +
                   nu_.nu_plus.dot(state_.fixed.array().log().matrix()) - (total - kernel_sum_);
  return kernel_.epsilon * d;
}

double SinkhornSolver::transport_cost(const Eigen::MatrixXd& distance) const {
  return (p_.asDiagonal() * kernel_.G.cwiseProduct(distance) * state_.fixed.asDiagonal()).sum();
}

SinkhornReport SinkhornSolver::run(const SinkhornOptions& options, const Observer& observer) {
  if (!(options.e_tol > 0.0)) throw Error(ErrorCode::parameter, "e_tol must be positive");
  SinkhornReport report;
  const std::size_t R = constraints();
  auto advance = [&] {
    step();
    if (observer) observer(n_, r_, *this);
  };
  while (r_ != R) advance();

  auto record = [&](double e) {
    if (options.record_history) {
      const double pr = primal();
      report.history.push_back({n_, n_ == 0 ? 0 : R - 1, e, pr, pr - dual()});
    }
  };
  double e = criterion();
  record(e);
  report.converged = e < options.e_tol;
  while (!report.converged && n_ < options.max_iters) {
    for (std::size_t k = 0; k + 1 < R; ++k) advance();
    e = criterion();
    record(e);
    if (e < options.e_tol) {
      report.converged = true;
      break;
    }
    if (n_ >= options.max_iters) break;
    advance();
  }
  report.iterations = n_;
  report.criterion = e;
  return report;
}

SinkhornResult sinkhorn_run(const GibbsKernel& kernel, const ConstraintSystem& system, const JointSignedMeasure& nu,
                            const SinkhornOptions& options, const std::optional<ScalingState>& warm) {
  SinkhornSolver solver(kernel, system, nu);
  if (warm) solver.set_state(*warm);
  SinkhornResult out;
  out.report = solver.run(options);
  out.coupling = solver.coupling();
  out.state = solver.state();
  out.primal = solver.primal();
  out.duality_gap = out.primal - solver.dual();
  return out;
}

Eigen::MatrixXd dykstra_run(const GibbsKernel& kernel, const ConstraintSystem& system, const JointSignedMeasure& nu,
                            std::size_t sweeps, const DykstraObserver& observer) {
  const Index n = kernel.G.rows();
  const std::size_t affine = system.size();
  const std::size_t R = affine + 2;
  const Eigen::VectorXd rhs = affine_rhs(system, nu);
  Eigen::MatrixXd X = kernel.G;
  std::vector<Eigen::MatrixXd> q(R, Eigen::MatrixXd::Ones(n, n));

  for (std::size_t it = 1; it <= sweeps; ++it) {
    for (std::size_t r = 0; r < R; ++r) {
      const Eigen::MatrixXd Y = X.cwiseProduct(q[r]);
      Eigen::MatrixXd next;
      if (r < affine) {
        const Eigen::VectorXd s = Y.rowwise().sum();
        std::vector<double> a;
        std::vector<double> xs;
        for (Index p = 0; p < n; ++p) {
          const double v = system.A(static_cast<Index>(r), p);
          if (v != 0.0) {
            a.push_back(v);
            xs.push_back(s[p]);
          }
        }
        const double lam = root_find(a, xs, rhs[static_cast<Index>(r)], r);
        const Eigen::VectorXd scale = (lam * system.A.row(static_cast<Index>(r)).transpose()).array().exp();
        next = scale.asDiagonal() * Y;
      } else if (r == affine) {
        const Eigen::VectorXd s = Y.rowwise().sum();
        const Eigen::VectorXd scale = nu.nu_minus.cwiseQuotient(s).cwiseMax(1.0);
        next = scale.asDiagonal() * Y;
      } else {
        const Eigen::VectorXd c = Y.colwise().sum().transpose();
        next = Y * nu.nu_plus.cwiseQuotient(c).asDiagonal();
      }
      q[r] = q[r].cwiseProduct(X).cwiseQuotient(next);
      X = std::move(next);
      if (observer) observer(it, r + 1, X, q);
    }
  }
  return X;
}

double duality_gap(const Eigen::MatrixXd& M, const ScalingState& state, const GibbsKernel& kernel,
                   const ConstraintSystem& system, const JointSignedMeasure& nu) {
  if ((state.box.array() < 1.0 - 1e-10).any()) {
    throw Error(ErrorCode::parameter, "box scaling below 1: dual point outside the conjugate's domain");
  }
  const double eps = kernel.epsilon;
  const double primal = eps * kl_divergence(M, kernel.G);
  Eigen::VectorXd rowscale = state.box;
  for (std::size_t r = 0; r < system.size(); ++r) {
    rowscale.array() *= (state.lambda[static_cast<Index>(r)] * system.A.row(static_cast<Index>(r)).transpose())
                            .array()
                            .exp();
  }
  const double scaled_sum = rowscale.dot(kernel.G * state.fixed);
  const double dual = eps * (state.lambda.dot(affine_rhs(system, nu)) +
                             nu.nu_minus.dot(state.box.array().log().matrix()) +
                             nu.nu_plus.dot(state.fixed.array().log().matrix()) - (scaled_sum - kernel.G.sum()));
  return primal - dual;
}

ScalingState rescale(const ScalingState& state, double eps_from, double eps_to) {
  const double k = eps_from / eps_to;
  ScalingState out;
  out.lambda = state.lambda * k;
  out.box = state.box.array().pow(k).matrix();
  out.fixed = state.fixed.array().pow(k).matrix();
  return out;
}

double underflow_mass(const GibbsKernel& kernel, const Eigen::MatrixXd& M) {
  if (kernel.floored == 0) return 0.0;
  const double tiny = std::numeric_limits<double>::min();
  return (kernel.G.array() <= tiny).select(M.array(), 0.0).sum();
}

std::vector<SweepRow> epsilon_sweep(const Eigen::MatrixXd& distance, const JointSignedMeasure& nu,
                                    const ConstraintSystem& system, std::span<const double> eps_list,
                                    const SweepOptions& options) {
  if (eps_list.empty()) throw Error(ErrorCode::parameter, "epsilon list is empty");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw Error(ErrorCode::parameter, "epsilon values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) {
      throw Error(ErrorCode::parameter, "epsilon values must be decreasing");
    }
  }
  SinkhornOptions sopt;
  sopt.e_tol = options.e_tol;
  sopt.max_iters = options.max_iters;
  sopt.record_history = false;

  std::vector<SweepRow> rows;
  std::optional<ScalingState> prev;
  double prev_eps = 0.0;
  for (double eps : eps_list) {
    SweepRow row;
    row.epsilon = eps;
    const GibbsKernel kernel = gibbs_kernel(distance, eps);
    std::optional<ScalingState> warm;
    if (options.warm_start && prev) {
      warm = rescale(*prev, prev_eps, eps);
      if (!warm->lambda.allFinite() || !warm->box.allFinite() || !warm->fixed.allFinite() ||
          (warm->fixed.array() <= 0.0).any()) {
        warm.reset();
      }
    }
    std::optional<SinkhornResult> res;
    try {
      res = sinkhorn_run(kernel, system, nu, sopt, warm);
    } catch (const InstabilityError& e) {
      if (warm) {
        try {
          res = sinkhorn_run(kernel, system, nu, sopt);
        } catch (const InstabilityError& e2) {
          row.error = e2.what();
        }
      } else {
        row.error = e.what();
      }
    }
    double lost = 0.0;
    if (res && kernel.floored > 0) {
      lost = underflow_mass(kernel, res->coupling);
    }
    if (res && lost > options.e_tol) {
      row.error = "instability: coupling puts mass " + std::to_string(lost) + " on " +
                  std::to_string(kernel.floored) + " underflowed Gibbs kernel entries; use a larger epsilon";
      res.reset();
    }
    if (res) {
      row.cost = res->coupling.cwiseProduct(distance).sum();
      row.criterion = res->report.criterion;
      row.iterations = res->report.iterations;
      row.converged = res->report.converged;
      prev = res->state;
      prev_eps = eps;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace arbproj
