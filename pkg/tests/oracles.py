"""Independent reference solvers used to check the production code.

These are intentionally slow and simple: a projected-gradient descent for
box-constrained QPs, a brute-force active-set enumeration for small QPs
with coupled rows, and a small-step RK4 integrator.  They share no code
with the solvers under test.
"""

from __future__ import annotations

import itertools

import numpy as np


def projected_gradient_box(hessian, gradient, lower, upper, max_iter=1_000_000):
    """Tiny-step projected gradient descent for min 1/2 x'Hx + g'x, x in [lo, hi]."""
    eigmax = float(np.max(np.linalg.eigvalsh(hessian)))
    step = 0.9 / eigmax
    x = np.clip(np.zeros_like(gradient), lower, upper)
    for _ in range(max_iter):
        x_next = np.clip(x - step * (hessian @ x + gradient), lower, upper)
        if np.max(np.abs(x_next - x)) < 1e-15:
            return x_next
        x = x_next
    return x


def projected_gradient_box_batch(hessians, gradients, lowers, uppers, max_iter=1_000_000):
    """Batched variant: one fixed-point sweep over a stack of box QPs."""
    h = np.asarray(hessians)
    eigmax = np.array([np.max(np.linalg.eigvalsh(hi)) for hi in h])
    step = (0.9 / eigmax)[:, None]
    x = np.clip(np.zeros_like(gradients), lowers, uppers)
    for it in range(max_iter):
        grad = np.einsum("bij,bj->bi", h, x) + gradients
        x_next = np.clip(x - step * grad, lowers, uppers)
        if it % 500 == 0 and np.max(np.abs(x_next - x)) < 1e-15:
            return x_next
        x = x_next
    return x


def enumerate_qp(hessian, gradient, a_rows, lower, upper, tol=1e-9):
    """Exact solution of a small QP by enumerating every active-set guess.

    Each row is inactive, at its lower bound, or at its upper bound
    (equality rows, lower == upper, are always active).  Returns the best
    KKT-consistent candidate.
    """
    n = gradient.shape[0]
    m = a_rows.shape[0]
    h_reg = hessian + 1e-12 * np.eye(n)
    eq_rows = [i for i in range(m) if lower[i] == upper[i]]
    free_rows = [i for i in range(m) if i not in eq_rows]
    best_obj, best_x = np.inf, None
    for combo in itertools.product((0, 1, 2), repeat=len(free_rows)):
        lo_idx = list(eq_rows) + [r for r, c in zip(free_rows, combo) if c == 1]
        hi_idx = [r for r, c in zip(free_rows, combo) if c == 2]
        act = lo_idx + hi_idx
        target = np.concatenate([lower[lo_idx], upper[hi_idx]])
        na = len(act)
        kkt = np.zeros((n + na, n + na))
        kkt[:n, :n] = h_reg
        if na:
            kkt[:n, n:] = a_rows[act].T
            kkt[n:, :n] = a_rows[act]
        rhs = np.concatenate([-gradient, target])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x, nu = sol[:n], sol[n:]
        r = a_rows @ x
        if np.any(r < lower - tol) or np.any(r > upper + tol):
            continue
        lam = dict(zip(act, nu))
        ok = True
        for i in lo_idx:
            if i not in eq_rows and lam[i] > tol:
                ok = False
        for i in hi_idx:
            if lam[i] < -tol:
                ok = False
        if not ok:
            continue
        obj = 0.5 * x @ hessian @ x + gradient @ x
        if obj < best_obj - 1e-14:
            best_obj, best_x = obj, x
    return best_x


def rk4_scalar(f, y0, t0, t1, dt):
    """Classic RK4 for a scalar ODE y' = f(t, y), fixed step."""
    steps = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / steps
    t, y = t0, y0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y
