#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <numeric>

namespace arbproj::oracle {

using Eigen::Index;

double vertex_enumeration(const Eigen::MatrixXd& A_in, const Eigen::VectorXd& b_in, const Eigen::VectorXd& c) {
  // Keep a maximal set of independent rows.
  Eigen::FullPivLU<Eigen::MatrixXd> rows_lu(A_in.transpose());
  rows_lu.setThreshold(1e-10);
  const Index rank = rows_lu.rank();
  Eigen::MatrixXd A(rank, A_in.cols());
  Eigen::VectorXd b(rank);
  for (Index i = 0; i < rank; ++i) {
    const Index row = rows_lu.permutationQ().indices()[i];
    A.row(i) = A_in.row(row);
    b[i] = b_in[row];
  }
  if (A_in.rows() > rank) {
    // Dropped rows must be consistent, otherwise the polytope is empty.
    Eigen::FullPivLU<Eigen::MatrixXd> check(A.transpose());
    for (Index r = 0; r < A_in.rows(); ++r) {
      const Eigen::VectorXd coef = check.solve(Eigen::VectorXd(A_in.row(r).transpose()));
      if (std::abs(coef.dot(b) - b_in[r]) > 1e-9 * (1.0 + std::abs(b_in[r]))) {
        return std::numeric_limits<double>::infinity();
      }
    }
  }

  const Index n = A.cols();
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  std::fill(pick.begin(), pick.begin() + rank, true);
  do {
    std::vector<Index> cols;
    for (Index j = 0; j < n; ++j) {
      if (pick[static_cast<std::size_t>(j)]) cols.push_back(j);
    }
    Eigen::MatrixXd B(rank, rank);
    for (Index k = 0; k < rank; ++k) B.col(k) = A.col(cols[static_cast<std::size_t>(k)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (lu.rank() < rank) continue;
    const Eigen::VectorXd xb = lu.solve(b);
    if ((B * xb - b).cwiseAbs().maxCoeff() > 1e-9) continue;
    if (xb.minCoeff() < -1e-11) continue;
    double value = 0.0;
    for (Index k = 0; k < rank; ++k) value += c[cols[static_cast<std::size_t>(k)]] * std::max(xb[k], 0.0);
    best = std::min(best, value);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

StandardForm p_prime_standard_form(const Eigen::MatrixXd& distance, const JointSignedMeasure& nu,
                                   const ConstraintSystem& system) {
  const Index N = distance.rows();
  const Index L = system.A.rows();
  StandardForm f;
  f.A = Eigen::MatrixXd::Zero(N + L + N, N * N + N);
  f.b = Eigen::VectorXd::Zero(N + L + N);
  f.c = Eigen::VectorXd::Zero(N * N + N);
  // x = (M_00, M_01, ..., M_{N-1,N-1}, mu_0, ..., mu_{N-1}).
  for (Index p = 0; p < N; ++p) {
    for (Index q = 0; q < N; ++q) {
      const Index v = p * N + q;
      f.c[v] = distance(p, q);
      f.A(p, v) = 1.0;          // row sum of M ...
      f.A(N + L + q, v) = 1.0;  // column sum of M
    }
    f.A(p, N * N + p) = -1.0;  // ... minus mu equals nu^-
    f.b[p] = nu.nu_minus[p];
    f.b[N + L + p] = nu.nu_plus[p];
  }
  f.A.block(N, N * N, L, N) = system.A;
  f.b.segment(N, L) = system.b;
  return f;
}

double lipschitz_dual(const Eigen::MatrixXd& distance, const Eigen::VectorXd& nu, const ConstraintSystem& system) {
  const Index N = distance.rows();
  const Index L = system.A.rows();
  const Index pairs = N * (N - 1);
  // Variables: phi (N, free), y (L, free), Lipschitz slacks, multiplier slacks.
  const Index nv = N + L + pairs + N;
  LpProblem lp;
  lp.objective = Eigen::VectorXd::Zero(nv);
  lp.lower = Eigen::VectorXd::Zero(nv);
  lp.lower.head(N + L).setConstant(-std::numeric_limits<double>::infinity());
  lp.eq_matrix = Eigen::MatrixXd::Zero(pairs + N, nv);
  lp.eq_rhs = Eigen::VectorXd::Zero(pairs + N);
  // minimize phi.nu - b.y
  lp.objective.head(N) = nu;
  lp.objective.segment(N, L) = -system.b;
  Index row = 0;
  for (Index p = 0; p < N; ++p) {
    for (Index q = 0; q < N; ++q) {
      if (p == q) continue;
      lp.eq_matrix(row, p) = 1.0;
      lp.eq_matrix(row, q) = -1.0;
      lp.eq_matrix(row, N + L + row) = 1.0;
      lp.eq_rhs[row] = distance(p, q);
      ++row;
    }
  }
  for (Index p = 0; p < N; ++p) {
    // phi_p - (A^T y)_p - t_p = 0
    lp.eq_matrix(row, p) = 1.0;
    lp.eq_matrix.block(row, N, 1, L) = -system.A.col(p).transpose();
    lp.eq_matrix(row, N + L + pairs + p) = -1.0;
    ++row;
  }
  LpOptions opts;
  opts.max_variables = static_cast<std::size_t>(2 * nv);  // free variables are split
  const LpSolution sol = solve_lp(lp, opts);
  if (sol.status != LpStatus::optimal) return std::numeric_limits<double>::quiet_NaN();
  return -sol.objective_value;
}

Eigen::VectorXd kkt_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& t) {
  const Index n = A.cols();
  const Index m = A.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n).setIdentity();
  K.topRightCorner(n, m) = A.transpose();
  K.bottomLeftCorner(m, n) = A;
  Eigen::VectorXd rhs(n + m);
  rhs << t, b;
  return K.fullPivLu().solve(rhs).head(n);
}

Eigen::VectorXd projection_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& t) {
  const Eigen::MatrixXd AAt = A * A.transpose();
  return t - A.transpose() * AAt.ldlt().solve(A * t - b);
}

double lognormal_call(double k, double vol, double maturity) {
  const double s = vol * std::sqrt(maturity);
  const double z0 = (std::log(k) + 0.5 * s * s) / s;
  const double lo = std::max(z0, -14.0);
  const double hi = std::max(lo, 0.0) + 14.0;
  const int n = 40000;
  const double h = (hi - lo) / n;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  auto f = [&](double z) {
    return std::max(std::exp(-0.5 * s * s + s * z) - k, 0.0) * inv_sqrt_2pi * std::exp(-0.5 * z * z);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  return acc * h / 3.0;
}

double Mixture::price(double k, double maturity) const {
  double c = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) c += weights[j] * bs_call_price(k, vols[j], maturity);
  return c;
}

NormalizedSurface random_clean_surface(std::mt19937_64& rng, std::size_t maturities, std::size_t min_strikes,
                                       std::size_t max_strikes, bool shared_strikes) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mixture mix;
  const std::size_t comps = 1 + static_cast<std::size_t>(u(rng) * 3.0) % 3;
  double total = 0.0;
  for (std::size_t j = 0; j < comps; ++j) {
    mix.weights.push_back(0.2 + u(rng));
    mix.vols.push_back(0.1 + 0.4 * u(rng));
    total += mix.weights.back();
  }
  for (double& w : mix.weights) w /= total;

  std::vector<double> mats;
  double t = 0.1 + 0.3 * u(rng);
  for (std::size_t i = 0; i < maturities; ++i) {
    mats.push_back(t);
    t += 0.1 + 0.5 * u(rng);
  }

  auto draw_strikes = [&] {
    const std::size_t n = min_strikes + static_cast<std::size_t>(u(rng) * double(max_strikes - min_strikes + 1)) %
                                            (max_strikes - min_strikes + 1);
    std::vector<double> ks;
    while (ks.size() < n) {
      const double k = 0.7 + 0.7 * u(rng);
      bool close = false;
      for (double x : ks) close = close || std::abs(x - k) < 0.03;
      if (!close) ks.push_back(k);
    }
    std::sort(ks.begin(), ks.end());
    return ks;
  };

  NormalizedSurface s;
  const auto common = draw_strikes();
  for (double T : mats) {
    Smile sm;
    sm.maturity = T;
    sm.strikes = shared_strikes ? common : draw_strikes();
    for (double k : sm.strikes) sm.prices.push_back(mix.price(k, T));
    s.smiles.push_back(std::move(sm));
  }
  return s;
}

NodeIndex inject_butterfly(std::mt19937_64& rng, NormalizedSurface& surface, double excess) {
  std::uniform_int_distribution<std::size_t> pick_i(0, surface.smiles.size() - 1);
  std::size_t i = pick_i(rng);
  for (std::size_t tries = 0; surface.smiles[i].size() < 2 && tries < 100; ++tries) i = pick_i(rng);
  auto& s = surface.smiles[i];
  if (s.size() < 2) throw std::invalid_argument("inject_butterfly needs a smile with two strikes");
  std::uniform_int_distribution<std::size_t> pick_j(0, s.size() - 2);
  const std::size_t j = pick_j(rng);
  const double kl = j == 0 ? 0.0 : s.strikes[j - 1];
  const double cl = j == 0 ? 1.0 : s.prices[j - 1];
  const double kr = s.strikes[j + 1];
  const double cr = s.prices[j + 1];
  const double w = (s.strikes[j] - kl) / (kr - kl);
  const double chord = (1.0 - w) * cl + w * cr;
  s.prices[j] = chord + excess * std::max(chord - s.prices[j], 1e-3);
  return {i, j};
}

RandomSmile random_augmented_smile(std::mt19937_64& rng, std::size_t interior) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomSmile s;
  std::vector<double> ks;
  while (ks.size() < interior) {
    const double k = 0.05 + 1.95 * u(rng);
    bool close = false;
    for (double x : ks) close = close || std::abs(x - k) < 1e-3;
    if (!close) ks.push_back(k);
  }
  std::sort(ks.begin(), ks.end());
  s.strikes.push_back(0.0);
  s.prices.push_back(1.0);
  for (double k : ks) {
    s.strikes.push_back(k);
    s.prices.push_back(0.01 + 1.1 * u(rng));
  }
  s.strikes.push_back(ks.back() * (1.05 + u(rng)));
  s.prices.push_back(0.0);
  return s;
}

bool martingale_feasible(const ConstraintSystem& system) {
  LpProblem lp;
  const Index n = system.A.cols();
  lp.objective = Eigen::VectorXd::Zero(n);
  lp.eq_matrix = system.A;
  lp.eq_rhs = system.b;
  lp.lower = Eigen::VectorXd::Zero(n);
  return solve_lp(lp).status == LpStatus::optimal;
}

}  // namespace arbproj::oracle
