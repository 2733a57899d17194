#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/errors.hpp"

namespace pdranpg {

namespace detail {

// Dense two-phase tableau simplex for: maximize c'x s.t. Ax = b, x >= 0.
// Artificial columns are kept through phase 2 (barred from entering); they
// carry B^{-1}, provide the lexicographic tie-break reference, and expose the
// dual vector directly. Degeneracy is broken lexicographically.
template <typename Scalar>
struct simplex_result {
  vector_t<Scalar> x;
  Scalar value{};
  vector_t<Scalar> dual;  // one multiplier per equality row
  bool feasible = false;
};

template <typename Scalar>
simplex_result<Scalar> simplex_maximize(matrix_t<Scalar> a, vector_t<Scalar> b,
                                        const vector_t<Scalar>& obj) {
  const index_t m = a.rows();
  const index_t n = a.cols();
  const Scalar tol = Scalar(1e-9);
  for (index_t i = 0; i < m; ++i) {
    if (b(i) < Scalar(0)) {
      a.row(i) = -a.row(i);
      b(i) = -b(i);
    }
  }

  // Tableau body: [A | I_art | b]; basis starts on the artificials.
  matrix_t<Scalar> t(m, n + m + 1);
  t.leftCols(n) = a;
  t.block(0, n, m, m) = matrix_t<Scalar>::Identity(m, m);
  t.col(n + m) = b;
  std::vector<index_t> basis(m);
  for (index_t i = 0; i < m; ++i) basis[i] = n + i;

  vector_t<Scalar> zrow(n + m);  // z_j - c_j
  Scalar zvalue = 0;
  auto rebuild_objective = [&](const vector_t<Scalar>& costs) {
    zvalue = 0;
    zrow.setZero();
    for (index_t i = 0; i < m; ++i) {
      const Scalar cb = costs(basis[i]);
      if (cb != Scalar(0)) {
        zrow.noalias() += cb * t.row(i).head(n + m).transpose();
        zvalue += cb * t(i, n + m);
      }
    }
    zrow -= costs.head(n + m);
  };

  auto pivot = [&](index_t row, index_t col) {
    t.row(row) /= t(row, col);
    for (index_t i = 0; i < m; ++i) {
      if (i != row && t(i, col) != Scalar(0)) t.row(i) -= t(i, col) * t.row(row);
    }
    zvalue -= zrow(col) * t(row, n + m);
    zrow -= zrow(col) * t.row(row).head(n + m).transpose();
    basis[row] = col;
  };

  // Lexicographic ratio test over the full row (rhs first).
  auto leaving_row = [&](index_t col) -> index_t {
    index_t best = -1;
    for (index_t i = 0; i < m; ++i) {
      if (t(i, col) <= tol) continue;
      if (best < 0) {
        best = i;
        continue;
      }
      const Scalar r_new = t(i, n + m) / t(i, col);
      const Scalar r_best = t(best, n + m) / t(best, col);
      if (r_new < r_best - tol) {
        best = i;
      } else if (r_new <= r_best + tol) {
        for (index_t j = 0; j < n + m; ++j) {
          const Scalar lex_new = t(i, j) / t(i, col);
          const Scalar lex_best = t(best, j) / t(best, col);
          if (lex_new < lex_best - tol) {
            best = i;
            break;
          }
          if (lex_new > lex_best + tol) break;
        }
      }
    }
    return best;
  };

  auto optimize = [&](bool allow_artificial_entering) {
    const long max_iters = 2000 * static_cast<long>(n + m + 1);
    for (long iter = 0; iter < max_iters; ++iter) {
      index_t entering = -1;
      Scalar most_negative = -tol;
      const index_t limit = allow_artificial_entering ? n + m : n;
      for (index_t j = 0; j < limit; ++j) {
        if (zrow(j) < most_negative) {
          most_negative = zrow(j);
          entering = j;
        }
      }
      if (entering < 0) return;
      const index_t row = leaving_row(entering);
      if (row < 0) throw convergence_error("simplex: unbounded objective", 0.0);
      pivot(row, entering);
    }
    throw convergence_error("simplex: iteration cap reached", static_cast<double>(zrow.minCoeff()));
  };

  // Phase 1: drive the artificial sum to zero.
  vector_t<Scalar> phase1 = vector_t<Scalar>::Zero(n + m);
  phase1.tail(m).setConstant(Scalar(-1));
  rebuild_objective(phase1);
  optimize(false);
  simplex_result<Scalar> out;
  if (zvalue < -Scalar(1e-7)) {
    out.feasible = false;
    out.value = zvalue;
    return out;
  }
  // Evict basic artificials sitting at zero where a real pivot exists.
  for (index_t i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    for (index_t j = 0; j < n; ++j) {
      if (std::abs(t(i, j)) > tol) {
        pivot(i, j);
        break;
      }
    }
  }

  // Phase 2.
  vector_t<Scalar> phase2 = vector_t<Scalar>::Zero(n + m);
  phase2.head(n) = obj;
  rebuild_objective(phase2);
  optimize(false);

  out.feasible = true;
  out.x = vector_t<Scalar>::Zero(n);
  for (index_t i = 0; i < m; ++i)
    if (basis[i] < n) out.x(basis[i]) = t(i, n + m);
  out.value = obj.dot(out.x);
  out.dual = zrow.segment(n, m);  // y_i = z at artificial column i (cost 0)
  return out;
}

// Flow constraints of the discounted occupancy polytope:
// sum_a nu(s',a) - gamma * sum_{s,a} P(s'|s,a) nu(s,a) = (1-gamma) rho(s').
template <typename Scalar>
void occupancy_flow_matrix(const cmdp_spec<Scalar>& spec, matrix_t<Scalar>& a,
                           vector_t<Scalar>& b) {
  const index_t S = spec.n_states, A = spec.n_actions;
  a = matrix_t<Scalar>::Zero(S, S * A);
  for (index_t s = 0; s < S; ++s) {
    for (index_t act = 0; act < A; ++act) {
      const index_t col = s * A + act;
      a(s, col) += Scalar(1);
      a.col(col).noalias() -= spec.gamma * spec.transition_row(s, act).transpose();
    }
  }
  b = (Scalar(1) - spec.gamma) * spec.rho;
}

}  // namespace detail

template <typename Scalar = double>
struct constrained_solution {
  matrix_t<Scalar> pi;       // S x A
  Scalar j_r{};              // optimal constrained value
  Scalar j_c{};              // cost value at the optimum
  Scalar lambda_star{};      // dual multiplier of the J_c >= 0 constraint
  Scalar max_attainable_jc{};
};

// Best achievable J_c over all policies (feasibility LP objective).
template <typename Scalar>
Scalar max_attainable_jc(const cmdp_spec<Scalar>& spec) {
  matrix_t<Scalar> a;
  vector_t<Scalar> b;
  detail::occupancy_flow_matrix(spec, a, b);
  vector_t<Scalar> obj(spec.n_states * spec.n_actions);
  for (index_t s = 0; s < spec.n_states; ++s)
    for (index_t act = 0; act < spec.n_actions; ++act) obj(s * spec.n_actions + act) = spec.cost(s, act);
  const auto res = detail::simplex_maximize<Scalar>(a, b, obj);
  if (!res.feasible) throw convergence_error("occupancy LP: flow polytope empty", 0.0);
  return res.value / (Scalar(1) - spec.gamma);
}

// Occupancy-measure LP for max J_r subject to J_c >= 0. Recovers the policy
// as nu(s,a)/sum_a nu(s,a), uniform on unvisited states.
template <typename Scalar>
constrained_solution<Scalar> solve_constrained_optimum(const cmdp_spec<Scalar>& spec) {
  const index_t S = spec.n_states, A = spec.n_actions;
  const Scalar jc_best = max_attainable_jc(spec);
  if (jc_best < Scalar(0))
    throw infeasible_error("constrained optimum: no feasible policy (max attainable J_c = " +
                               std::to_string(static_cast<double>(jc_best)) + ")",
                           static_cast<double>(jc_best));

  matrix_t<Scalar> flow;
  vector_t<Scalar> b_flow;
  detail::occupancy_flow_matrix(spec, flow, b_flow);
  const index_t n = S * A + 1;  // occupancy entries plus the cost surplus
  matrix_t<Scalar> a = matrix_t<Scalar>::Zero(S + 1, n);
  a.topLeftCorner(S, S * A) = flow;
  vector_t<Scalar> b(S + 1);
  b.head(S) = b_flow;
  b(S) = Scalar(0);
  vector_t<Scalar> obj = vector_t<Scalar>::Zero(n);
  for (index_t s = 0; s < S; ++s) {
    for (index_t act = 0; act < A; ++act) {
      a(S, s * A + act) = spec.cost(s, act);
      obj(s * A + act) = spec.reward(s, act);
    }
  }
  a(S, S * A) = Scalar(-1);

  const auto res = detail::simplex_maximize<Scalar>(a, b, obj);
  if (!res.feasible)
    throw infeasible_error("constrained optimum: LP infeasible", static_cast<double>(jc_best));

  constrained_solution<Scalar> sol;
  sol.max_attainable_jc = jc_best;
  sol.j_r = res.value / (Scalar(1) - spec.gamma);
  sol.lambda_star = std::max(Scalar(0), -res.dual(S));
  sol.pi = matrix_t<Scalar>::Zero(S, A);
  Scalar jc = 0;
  for (index_t s = 0; s < S; ++s) {
    Scalar mass = 0;
    for (index_t act = 0; act < A; ++act) mass += res.x(s * A + act);
    if (mass > Scalar(1e-12)) {
      for (index_t act = 0; act < A; ++act) sol.pi(s, act) = res.x(s * A + act) / mass;
    } else {
      sol.pi.row(s).setConstant(Scalar(1) / static_cast<Scalar>(A));
    }
    for (index_t act = 0; act < A; ++act) jc += res.x(s * A + act) * spec.cost(s, act);
  }
  sol.j_c = jc / (Scalar(1) - spec.gamma);
  return sol;
}

}  // namespace pdranpg
