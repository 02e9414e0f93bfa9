"""Dense convex quadratic programming.

Solves

    min 1/2 x' H x + g' x
    s.t.  l <= A x <= u          (two-sided inequality rows)
          E x = b                (equality rows)

with a two-stage strategy:

1. A primal-dual active-set iteration guesses which rows sit on their
   bounds, solves the equality-constrained KKT system, and updates the
   guess from primal violations and multiplier signs.  Warm starts seed
   the guess from the supplied primal, so re-solving an unchanged (or
   mildly perturbed) problem costs one KKT factorization - which is what
   keeps the receding-horizon controllers cheap.
2. The guess update can cycle on degenerate geometry.  When that happens
   an operator-splitting (ADMM) stage takes over: it converges from any
   start, certifies primal infeasibility via its dual iterates, and its
   near-solution is polished back to full accuracy by one clean KKT
   solve on the identified active set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

HESSIAN_REGULARIZATION = 1e-9
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 4000
_DUAL_REG = 1e-12  # keeps the KKT system solvable under degenerate active sets


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """Dense QP data.  ``eq_matrix``/``eq_rhs`` may be None when unused."""

    hessian: np.ndarray
    gradient: np.ndarray
    ineq_matrix: Optional[np.ndarray] = None
    ineq_lower: Optional[np.ndarray] = None
    ineq_upper: Optional[np.ndarray] = None
    eq_matrix: Optional[np.ndarray] = None
    eq_rhs: Optional[np.ndarray] = None

    def dim(self) -> int:
        return self.gradient.shape[0]

    def validate(self) -> None:
        n = self.dim()
        if self.hessian.shape != (n, n):
            raise ValueError(f"hessian shape {self.hessian.shape} does not match n={n}")
        if not np.allclose(self.hessian, self.hessian.T, atol=1e-10):
            raise ValueError("hessian must be symmetric")
        if self.ineq_matrix is not None:
            mi = self.ineq_matrix.shape[0]
            if self.ineq_matrix.shape != (mi, n):
                raise ValueError("inequality matrix has inconsistent column count")
            if self.ineq_lower.shape != (mi,) or self.ineq_upper.shape != (mi,):
                raise ValueError("inequality bounds do not match the row count")
            if np.any(self.ineq_lower > self.ineq_upper + 1e-15):
                raise ValueError("inequality lower bound exceeds upper bound")
        if self.eq_matrix is not None:
            me = self.eq_matrix.shape[0]
            if self.eq_matrix.shape != (me, n):
                raise ValueError("equality matrix has inconsistent column count")
            if self.eq_rhs.shape != (me,):
                raise ValueError("equality rhs does not match the row count")


@dataclass
class QpSolution:
    primal: np.ndarray
    objective: float
    status: QpStatus
    iterations: int
    dual: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _stacked_rows(problem: QpProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Equality rows first (as l == u), then inequality rows."""
    n = problem.dim()
    blocks_a, blocks_l, blocks_u = [], [], []
    if problem.eq_matrix is not None and problem.eq_matrix.shape[0] > 0:
        blocks_a.append(np.asarray(problem.eq_matrix, dtype=float))
        rhs = np.asarray(problem.eq_rhs, dtype=float)
        blocks_l.append(rhs)
        blocks_u.append(rhs)
    if problem.ineq_matrix is not None and problem.ineq_matrix.shape[0] > 0:
        blocks_a.append(np.asarray(problem.ineq_matrix, dtype=float))
        blocks_l.append(np.asarray(problem.ineq_lower, dtype=float))
        blocks_u.append(np.asarray(problem.ineq_upper, dtype=float))
    if not blocks_a:
        return np.zeros((0, n)), np.zeros(0), np.zeros(0)
    return np.vstack(blocks_a), np.concatenate(blocks_l), np.concatenate(blocks_u)


class _WorkBuffers:
    """Problem data shared between the solver stages (rows pre-scaled)."""

    def __init__(self, h_reg, gradient, a_rows, lower, upper):
        self.h_reg = h_reg
        self.gradient = gradient
        self.a = a_rows
        self.lower = lower
        self.upper = upper
        self.is_eq = lower == upper
        self.m = a_rows.shape[0]


def _refined_solve(kkt: np.ndarray, rhs: np.ndarray, passes: int = 2) -> np.ndarray:
    """LU solve with iterative refinement; the KKT systems here can be
    ill-conditioned enough that raw factorization noise stalls the
    active-set iterations."""
    factor = lu_factor(kkt)
    x = lu_solve(factor, rhs)
    for _ in range(passes):
        residual = rhs - kkt @ x
        x += lu_solve(factor, residual)
    return x


def _solve_kkt(h_reg, a_rows, active_idx, gradient, target):
    """Equality-constrained solve for the current active set.

    Tries the exact (unregularized) KKT system first; large multipliers
    would otherwise leak the dual regularization into primal
    infeasibility.  A redundant active set makes that system singular,
    in which case the regularized form takes over.
    """
    n = h_reg.shape[0]
    na = active_idx.shape[0]
    if na == 0:
        x = _refined_solve(h_reg, -gradient)
        return x, np.zeros(0)
    a_act = a_rows[active_idx]
    kkt = np.zeros((n + na, n + na))
    kkt[:n, :n] = h_reg
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    rhs = np.concatenate([-gradient, target[active_idx]])
    with np.errstate(all="ignore"):
        sol = _refined_solve(kkt, rhs)
        if np.all(np.isfinite(sol)):
            err = np.max(np.abs(kkt @ sol - rhs))
            if err <= 1e-9 * (1.0 + np.max(np.abs(rhs))):
                return sol[:n], sol[n:]
    kkt[n:, n:] = -_DUAL_REG * np.eye(na)
    sol = _refined_solve(kkt, rhs)
    return sol[:n], sol[n:]


def _kkt_residual(w: _WorkBuffers, x, lam) -> float:
    """Normalized KKT residual: primal feasibility is absolute, while
    stationarity and complementarity are measured relative to the data
    scale (otherwise rescaling the objective would change optimality)."""
    hx = w.h_reg @ x
    aty = w.a.T @ lam
    stationarity = hx + w.gradient + aty
    st_scale = max(
        1.0,
        np.max(np.abs(hx), initial=0.0),
        np.max(np.abs(w.gradient), initial=0.0),
        np.max(np.abs(aty), initial=0.0),
    )
    r = w.a @ x
    primal = np.maximum(w.lower - r, 0.0) + np.maximum(r - w.upper, 0.0)
    comp_hi = np.abs(np.maximum(lam, 0.0) * (w.upper - r))
    comp_lo = np.abs(np.minimum(lam, 0.0) * (r - w.lower))
    comp = np.where(w.is_eq, 0.0, comp_hi + comp_lo)
    comp_scale = max(1.0, np.max(np.abs(lam), initial=0.0))
    return float(
        max(
            np.max(np.abs(stationarity), initial=0.0) / st_scale,
            np.max(primal, initial=0.0),
            np.max(comp, initial=0.0) / comp_scale,
        )
    )


def _pdas(w: _WorkBuffers, x0, tol, budget):
    """Primal-dual active-set stage.  Returns (x, lam, iters, converged)."""
    act_tol = 1e-11 * (1.0 + np.maximum(np.abs(w.lower), np.abs(w.upper)))
    r = w.a @ x0
    at_lo = (r <= w.lower + act_tol) | w.is_eq
    at_hi = (r >= w.upper - act_tol) & ~w.is_eq & ~at_lo

    seen: set[tuple[bytes, bytes]] = set()
    best: Optional[tuple[float, np.ndarray, np.ndarray]] = None
    iterations = 0
    while iterations < budget:
        iterations += 1
        target = np.where(at_lo, w.lower, w.upper)
        active_idx = np.flatnonzero(at_lo | at_hi)
        x, nu = _solve_kkt(w.h_reg, w.a, active_idx, w.gradient, target)
        if not np.all(np.isfinite(x)):
            break
        lam = np.zeros(w.m)
        lam[active_idx] = nu

        r = w.a @ x
        shifted = r + lam
        new_lo = (shifted < w.lower - act_tol) | w.is_eq
        new_hi = (shifted > w.upper + act_tol) & ~w.is_eq

        res = _kkt_residual(w, x, lam)
        if best is None or res < best[0]:
            best = (res, x.copy(), lam.copy())
        if np.array_equal(new_lo, at_lo) and np.array_equal(new_hi, at_hi):
            return x, lam, iterations, res <= tol
        key = (np.packbits(new_lo).tobytes(), np.packbits(new_hi).tobytes())
        if key in seen:
            break
        seen.add(key)
        at_lo, at_hi = new_lo, new_hi
    if best is not None:
        return best[1], best[2], iterations, best[0] <= tol
    return x0, np.zeros(w.m), iterations, False


def _polish(w: _WorkBuffers, x, y, tol):
    """Clean KKT solves on the active set implied by the duals, expanding
    the set with any rows the solution leaves violated."""
    y_scale = 1e-9 * (1.0 + np.max(np.abs(y), initial=0.0))
    at_lo = (y < -y_scale) | w.is_eq
    at_hi = (y > y_scale) & ~w.is_eq
    x_pol = x
    lam = np.zeros(w.m)
    for _ in range(6):
        target = np.where(at_lo, w.lower, w.upper)
        active_idx = np.flatnonzero(at_lo | at_hi)
        x_pol, nu = _solve_kkt(w.h_reg, w.a, active_idx, w.gradient, target)
        lam = np.zeros(w.m)
        lam[active_idx] = nu
        r = w.a @ x_pol
        feas_tol = 1e-12 * (1.0 + np.maximum(np.abs(w.lower), np.abs(w.upper)))
        viol_lo = (r < w.lower - feas_tol) & ~(at_lo | at_hi)
        viol_hi = (r > w.upper + feas_tol) & ~(at_lo | at_hi)
        if not (np.any(viol_lo) or np.any(viol_hi)):
            break
        at_lo |= viol_lo
        at_hi |= viol_hi
    ok = _kkt_residual(w, x_pol, lam) <= tol
    return x_pol, lam, ok


def _admm(w: _WorkBuffers, x0, tol, budget):
    """Operator-splitting stage: robust fallback with infeasibility
    certificates.  Returns (x, lam, iterations, status_or_None)."""
    n = w.h_reg.shape[0]
    m = w.m
    # Equilibrate the objective so a fixed step parameter behaves.
    obj_scale = 1.0 / max(float(np.median(np.abs(np.diag(w.h_reg)))), 1e-6)
    p_s = w.h_reg * obj_scale
    q_s = w.gradient * obj_scale
    sigma = 1e-6
    alpha = 1.6
    rho = np.where(w.is_eq, 1e3 * 0.1, 0.1)

    def factor_kkt():
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = p_s + sigma * np.eye(n)
        kkt[:n, n:] = w.a.T
        kkt[n:, :n] = w.a
        kkt[n:, n:] = -np.diag(1.0 / rho)
        return lu_factor(kkt)

    factor = factor_kkt()
    x = x0.copy()
    z = np.clip(w.a @ x, w.lower, w.upper)
    y = np.zeros(m)
    refactors = 0
    iterations = 0
    while iterations < budget:
        iterations += 1
        rhs = np.concatenate([sigma * x - q_s, z - y / rho])
        sol = lu_solve(factor, rhs)
        x_t, nu = sol[:n], sol[n:]
        z_t = z + (nu - y) / rho
        x_new = alpha * x_t + (1 - alpha) * x
        z_relaxed = alpha * z_t + (1 - alpha) * z
        z_new = np.clip(z_relaxed + y / rho, w.lower, w.upper)
        y_new = y + rho * (z_relaxed - z_new)

        if iterations % 25 == 0 or iterations == budget:
            r_prim = np.max(np.abs(w.a @ x_new - z_new), initial=0.0)
            dual_vec = p_s @ x_new + q_s + w.a.T @ y_new
            d_scale = max(
                1.0,
                np.max(np.abs(p_s @ x_new), initial=0.0),
                np.max(np.abs(q_s), initial=0.0),
                np.max(np.abs(w.a.T @ y_new), initial=0.0),
            )
            r_dual = np.max(np.abs(dual_vec), initial=0.0) / d_scale
            # The polish is one KKT solve: once the duals roughly identify
            # the active set it finishes the job, so try it eagerly.
            if r_prim < 1e-4 and r_dual < 1e-4 or (iterations % 100 == 0 and r_prim < 1e-2):
                x_pol, lam, ok = _polish(w, x_new, y_new / obj_scale, tol)
                if ok:
                    return x_pol, lam, iterations, QpStatus.OPTIMAL
            # Primal infeasibility certificate from the dual increment.
            dy = y_new - y
            dy_norm = np.max(np.abs(dy), initial=0.0)
            if dy_norm > 1e-14:
                cert_a = np.max(np.abs(w.a.T @ dy), initial=0.0)
                support = w.upper @ np.maximum(dy, 0.0) + w.lower @ np.minimum(dy, 0.0)
                if cert_a <= 1e-8 * dy_norm and support <= -1e-8 * dy_norm:
                    return x_new, y_new, iterations, QpStatus.INFEASIBLE
            # Rebalance the step parameter when residuals diverge.
            if refactors < 6 and iterations >= 50 and r_dual > 1e-12:
                ratio = r_prim / max(r_dual, 1e-12)
                if ratio > 10.0 or ratio < 0.1:
                    rho = np.clip(rho * np.sqrt(ratio), 1e-6, 1e6)
                    factor = factor_kkt()
                    refactors += 1
        x, z, y = x_new, z_new, y_new

    x_pol, lam, ok = _polish(w, x, y / obj_scale, tol)
    if ok:
        return x_pol, lam, iterations, QpStatus.OPTIMAL
    return x, y / obj_scale, iterations, None


def solve_qp(
    problem: QpProblem,
    warm_start: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> QpSolution:
    """Solve a dense convex QP.

    Args:
        problem: validated problem data (``validate`` is called here).
        warm_start: optional primal point used to seed the active set.
        tol: KKT and feasibility tolerance for declaring optimality.
        max_iter: cap on iterations across both stages.

    Returns:
        ``QpSolution`` with status OPTIMAL, MAX_ITER or INFEASIBLE.
    """
    problem.validate()
    n = problem.dim()
    gradient = np.asarray(problem.gradient, dtype=float)
    hessian = np.asarray(problem.hessian, dtype=float)
    # Per-coordinate proportional regularization: tolerates zero-weight
    # rows (floored at the median diagonal scale) without distorting
    # weakly-weighted directions, and keeps the solution invariant under
    # positive rescaling of the objective.
    diag = np.abs(np.diag(hessian))
    floor = max(float(np.median(diag)), 1e-12)
    h_reg = hessian + np.diag(HESSIAN_REGULARIZATION * np.maximum(diag, floor))

    a_rows, lower, upper = _stacked_rows(problem)
    if a_rows.shape[0] == 0:
        x = _refined_solve(h_reg, -gradient)
        return QpSolution(x, _objective(problem, x), QpStatus.OPTIMAL, 1, np.zeros(0))

    # Row scaling keeps the active-set tests unit-free.
    row_scale = np.maximum(np.max(np.abs(a_rows), axis=1), 1e-12)
    a_rows = a_rows / row_scale[:, None]
    lower = lower / row_scale
    upper = upper / row_scale

    w = _WorkBuffers(h_reg, gradient, a_rows, lower, upper)
    x0 = warm_start.astype(float).copy() if warm_start is not None else np.zeros(n)

    pdas_budget = min(max_iter, 40)
    x, lam, it1, ok = _pdas(w, x0, tol, pdas_budget)
    if ok:
        return QpSolution(x, _objective(problem, x), QpStatus.OPTIMAL, it1, lam)

    x2, lam2, it2, status = _admm(w, x, tol, max_iter - it1)
    iterations = it1 + it2
    if status is QpStatus.OPTIMAL:
        return QpSolution(x2, _objective(problem, x2), QpStatus.OPTIMAL, iterations, lam2)
    if status is QpStatus.INFEASIBLE:
        return QpSolution(x2, _objective(problem, x2), QpStatus.INFEASIBLE, iterations, None)
    # Keep the better of the two stages' iterates.
    if _kkt_residual(w, x, lam) <= _kkt_residual(w, x2, lam2):
        return QpSolution(x, _objective(problem, x), QpStatus.MAX_ITER, iterations, lam)
    return QpSolution(x2, _objective(problem, x2), QpStatus.MAX_ITER, iterations, lam2)


def _objective(problem: QpProblem, x: np.ndarray) -> float:
    return float(0.5 * x @ problem.hessian @ x + problem.gradient @ x)
