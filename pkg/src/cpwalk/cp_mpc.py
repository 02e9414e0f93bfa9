"""Per-axis receding-horizon CP tracking with ankle, hip and stepping inputs.

One axis solves

    min  ||Xi - Xi_ref||^2_{w_xi} + ||tau + K_d h||^2_{w_tau}
         + ||dF||^2_{w_F} + ||dP||^2_{w_p}
    s.t. Z - S dF in [Z_lb, Z_ub],  tau in [tau_lb, tau_ub],
         dF in [dF_lb, dF_ub]

over the decision vector ``[P; dF]`` where ``P`` interleaves ZMP and
flywheel-moment inputs (see ``predictor``) and ``dF`` holds adjustments of
the pre-planned future footsteps.  The CAM ``h`` is affine in the moment
inputs through a lower-triangular Ts-scaled summation seeded with the
measured momentum, ``dP`` differences the inputs per channel anchored at
the input actually applied last cycle, and the binary selection matrix
``S`` relaxes the ZMP band from each future touchdown onward.

The damping weights come from a cubic schedule over the previous cycle's
ZMP corrections: large |delta ZMP| zeroes the damping so the full moment
authority serves the push, small |delta ZMP| restores it so the momentum
bleeds off in steady state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_model import RobotParams
from .predictor import HorizonModel
from .qp_solver import QpProblem, QpSolution, QpStatus, solve_qp

W_XI_BANDS = (10.0, 5.0, 100.0)
W_P_BANDS = (0.1, 10.0, 0.1)
W_F_DEFAULT = 0.001
K_D_DEFAULT = 50.0
W_TAU_MAX_DEFAULT = 1.0e-6
TERMINAL_BAND_TICKS = 10


def banded_weights(n: int, first: float, middle: float, last: float,
                   tail: int = TERMINAL_BAND_TICKS) -> np.ndarray:
    """Three-band weight profile: tick 1, middle run, last ``tail+1`` ticks."""
    w = np.full(n, float(middle))
    w[0] = first
    w[max(1, n - tail - 1):] = last
    return w


def variable_tau_weights(delta_zmp_abs: np.ndarray, dz_min: float, dz_max: float,
                         w_max: float) -> np.ndarray:
    """Damping weights from |delta ZMP| via a monotone-decreasing cubic.

    ``w_max`` below ``dz_min``, zero above ``dz_max``, smoothstep
    complement in between (C1 at both anchors).
    """
    if dz_min >= dz_max:
        raise ValueError(f"need dz_min < dz_max, got {dz_min} >= {dz_max}")
    u = np.clip((np.abs(delta_zmp_abs) - dz_min) / (dz_max - dz_min), 0.0, 1.0)
    return w_max * (1.0 - 3.0 * u**2 + 2.0 * u**3)


@dataclass
class MpcWeights:
    w_xi: np.ndarray    # (N,)
    w_tau: np.ndarray   # (N,)
    w_f: np.ndarray     # (m,)
    w_p: np.ndarray     # (2N,) interleaved per input entry
    k_d: float = K_D_DEFAULT

    @classmethod
    def from_defaults(cls, n: int, m: int, w_tau_value: float = W_TAU_MAX_DEFAULT) -> "MpcWeights":
        return cls(
            w_xi=banded_weights(n, *W_XI_BANDS),
            w_tau=np.full(n, w_tau_value),
            w_f=np.full(m, W_F_DEFAULT),
            w_p=np.repeat(banded_weights(n, *W_P_BANDS), 2),
        )


@dataclass
class MpcBounds:
    zmp_lower: np.ndarray
    zmp_upper: np.ndarray
    tau_lower: np.ndarray
    tau_upper: np.ndarray
    df_lower: np.ndarray
    df_upper: np.ndarray


@dataclass
class SelectionMatrix:
    """Binary activation of footstep adjustments over the horizon."""

    s: np.ndarray  # (N, m)

    @classmethod
    def cumulative(cls, n_ticks: int, activation_ticks: list[int]) -> "SelectionMatrix":
        """Column j is 1 from the first tick of footstep j's support onward.

        Cumulative because future steps are planned relative to the
        supporting foot: adjusting footstep j rigidly shifts every later
        support region.
        """
        s = np.zeros((n_ticks, len(activation_ticks)))
        for j, tick in enumerate(activation_ticks):
            if tick < 0 or tick >= n_ticks:
                raise ValueError(f"activation tick {tick} outside horizon of {n_ticks}")
            s[tick:, j] = 1.0
        return cls(s)

    @property
    def n_steps(self) -> int:
        return self.s.shape[1]

    def activation_ticks(self) -> list[int]:
        return [int(np.argmax(self.s[:, j] > 0)) for j in range(self.s.shape[1])]


@dataclass
class MpcLayout:
    """Index bookkeeping for the stacked decision vector."""

    n_ticks: int
    n_steps: int
    use_moment: bool = True

    @property
    def n_inputs(self) -> int:
        return (2 if self.use_moment else 1) * self.n_ticks

    @property
    def n_vars(self) -> int:
        return self.n_inputs + self.n_steps

    @property
    def z_idx(self) -> np.ndarray:
        stride = 2 if self.use_moment else 1
        return np.arange(0, stride * self.n_ticks, stride)

    @property
    def tau_idx(self) -> np.ndarray:
        if not self.use_moment:
            return np.zeros(0, dtype=int)
        return np.arange(1, 2 * self.n_ticks, 2)

    @property
    def df_idx(self) -> np.ndarray:
        return np.arange(self.n_inputs, self.n_vars)


@dataclass
class MpcAxisState:
    """Per-axis feedback and anchoring for one control cycle."""

    xi0: float
    h0: float = 0.0
    prev_zmp: float = 0.0
    prev_tau: float = 0.0


@dataclass
class MpcSolution:
    zmp_seq: np.ndarray
    tau_seq: np.ndarray
    df: np.ndarray
    first_zmp: float
    first_tau: float
    status: QpStatus
    degraded: bool = False
    objective: float = float("nan")
    iterations: int = 0
    primal: Optional[np.ndarray] = field(default=None, repr=False)

    def shifted(self) -> "MpcSolution":
        """One-tick shift with the terminal entry repeated (fallback reuse)."""
        z = np.append(self.zmp_seq[1:], self.zmp_seq[-1])
        t = np.append(self.tau_seq[1:], self.tau_seq[-1])
        return MpcSolution(z, t, self.df.copy(), float(z[0]), float(t[0]),
                           self.status, degraded=True)


def _cam_integration(n: int, k_d: float, ts: float) -> np.ndarray:
    # (I + k_d * Ts * L) with L the inclusive lower-triangular summation.
    return np.eye(n) + k_d * ts * np.tril(np.ones((n, n)))


def _difference_operator(n_inputs: int, stride: int) -> np.ndarray:
    d = np.eye(n_inputs)
    idx = np.arange(stride, n_inputs)
    d[idx, idx - stride] = -1.0
    return d


def build_mpc_qp(
    state: MpcAxisState,
    xi_ref: np.ndarray,
    model: HorizonModel,
    weights: MpcWeights,
    bounds: MpcBounds,
    sel: SelectionMatrix,
    params: RobotParams,
    use_moment: bool = True,
) -> tuple[QpProblem, MpcLayout]:
    """Assemble the per-axis QP.  Reference implementation; the controller
    caches the state-independent blocks (see ``CpMpcAxis``)."""
    n = model.horizon
    m = sel.n_steps
    layout = MpcLayout(n, m, use_moment)
    if xi_ref.shape != (n,):
        raise ValueError(f"xi_ref must have shape ({n},), got {xi_ref.shape}")
    if sel.s.shape[0] != n:
        raise ValueError("selection matrix row count must equal the horizon")

    phi_in = model.phi_p if use_moment else model.phi_p[:, 0::2]
    stride = 2 if use_moment else 1
    n_in = layout.n_inputs
    nv = layout.n_vars

    h = np.zeros((nv, nv))
    g = np.zeros(nv)

    # (a) CP tracking
    r_track = xi_ref - model.phi_xi * state.xi0
    wxi_phi = weights.w_xi[:, None] * phi_in
    h[:n_in, :n_in] += 2.0 * phi_in.T @ wxi_phi
    g[:n_in] += -2.0 * wxi_phi.T @ r_track

    # (b) CAM damping (moment channel only)
    if use_moment:
        m_d = _cam_integration(n, weights.k_d, params.control_period_s)
        w_md = weights.w_tau[:, None] * m_d
        h_tau = 2.0 * m_d.T @ w_md
        tau_ix = layout.tau_idx
        h[np.ix_(tau_ix, tau_ix)] += h_tau
        g[tau_ix] += 2.0 * weights.k_d * state.h0 * (m_d.T @ weights.w_tau)

    # (c) footstep adjustment magnitude
    df_ix = layout.df_idx
    h[df_ix, df_ix] += 2.0 * weights.w_f

    # (d) input smoothness anchored at the previously applied input
    w_p = weights.w_p if use_moment else weights.w_p[0::2]
    diff = _difference_operator(n_in, stride)
    wp_diff = w_p[:, None] * diff
    h[:n_in, :n_in] += 2.0 * diff.T @ wp_diff
    d0 = np.zeros(n_in)
    d0[0] = state.prev_zmp
    if use_moment:
        d0[1] = state.prev_tau
    g[:n_in] += -2.0 * wp_diff.T @ d0

    # Constraints: relaxed ZMP band, moment box, adjustment box.
    rows = n + (n if use_moment else 0) + m
    a = np.zeros((rows, nv))
    lo = np.empty(rows)
    up = np.empty(rows)
    a[np.arange(n), layout.z_idx] = 1.0
    if m:
        a[:n, df_ix] = -sel.s
    lo[:n] = bounds.zmp_lower
    up[:n] = bounds.zmp_upper
    r = n
    if use_moment:
        a[r + np.arange(n), layout.tau_idx] = 1.0
        lo[r : r + n] = bounds.tau_lower
        up[r : r + n] = bounds.tau_upper
        r += n
    if m:
        a[r + np.arange(m), df_ix] = 1.0
        lo[r:] = bounds.df_lower
        up[r:] = bounds.df_upper

    return QpProblem(h, g, a, lo, up), layout


def solve_axis(
    problem: QpProblem,
    layout: MpcLayout,
    warm_start: Optional[np.ndarray] = None,
    prev_solution: Optional[MpcSolution] = None,
    tol: float = 1e-8,
) -> MpcSolution:
    """Solve an assembled axis QP; fall back to the shifted previous
    solution when the solver cannot produce a usable point."""
    sol = solve_qp(problem, warm_start=warm_start, tol=tol)
    if sol.status is not QpStatus.OPTIMAL:
        if prev_solution is not None:
            fallback = prev_solution.shifted()
            fallback.status = sol.status
            fallback.iterations = sol.iterations
            return fallback
        return MpcSolution(
            zmp_seq=np.zeros(layout.n_ticks),
            tau_seq=np.zeros(layout.n_ticks),
            df=np.zeros(layout.n_steps),
            first_zmp=0.0,
            first_tau=0.0,
            status=sol.status,
            degraded=True,
            iterations=sol.iterations,
        )
    x = sol.primal
    z = x[layout.z_idx]
    tau = x[layout.tau_idx] if layout.use_moment else np.zeros(layout.n_ticks)
    df = x[layout.df_idx]
    return MpcSolution(z, tau, df, float(z[0]), float(tau[0]) if layout.use_moment else 0.0,
                       sol.status, degraded=False, objective=sol.objective,
                       iterations=sol.iterations, primal=x)


class CpMpcAxis:
    """Stateful per-axis controller: weight scheduling, warm starts,
    cached cost blocks, and the infeasibility fallback."""

    def __init__(
        self,
        model: HorizonModel,
        params: RobotParams,
        dz_min: float,
        dz_max: float,
        w_tau_max: float = W_TAU_MAX_DEFAULT,
        use_moment: bool = True,
        use_footstep_adjust: bool = True,
        variable_weighting: bool = True,
        k_d: float = K_D_DEFAULT,
    ):
        self.model = model
        self.params = params
        self.dz_min = dz_min
        self.dz_max = dz_max
        self.w_tau_max = w_tau_max
        self.use_moment = use_moment
        self.use_footstep_adjust = use_footstep_adjust
        self.variable_weighting = variable_weighting
        self.k_d = k_d
        self.prev_solution: Optional[MpcSolution] = None
        self.prev_applied: Optional[tuple[float, float]] = None
        self.last_weights: Optional[np.ndarray] = None

    def scheduled_weights(self, zmp_ref: np.ndarray) -> np.ndarray:
        """Damping weights for this cycle from last cycle's solution."""
        n = self.model.horizon
        if not self.use_moment:
            return np.zeros(n)
        if not self.variable_weighting or self.prev_solution is None:
            w = np.full(n, self.w_tau_max)
        else:
            z_prev = np.append(self.prev_solution.zmp_seq[1:], self.prev_solution.zmp_seq[-1])
            w = variable_tau_weights(np.abs(z_prev - zmp_ref), self.dz_min, self.dz_max,
                                     self.w_tau_max)
        self.last_weights = w
        return w

    def solve(
        self,
        state: MpcAxisState,
        xi_ref: np.ndarray,
        zmp_ref: np.ndarray,
        bounds: MpcBounds,
        sel: SelectionMatrix,
    ) -> MpcSolution:
        n = self.model.horizon
        m = sel.n_steps if self.use_footstep_adjust else 0
        if not self.use_footstep_adjust:
            sel = SelectionMatrix(np.zeros((n, 0)))
            bounds = MpcBounds(bounds.zmp_lower, bounds.zmp_upper,
                               bounds.tau_lower, bounds.tau_upper,
                               np.zeros(0), np.zeros(0))
        weights = MpcWeights(
            w_xi=banded_weights(n, *W_XI_BANDS),
            w_tau=self.scheduled_weights(zmp_ref),
            w_f=np.full(m, W_F_DEFAULT),
            w_p=np.repeat(banded_weights(n, *W_P_BANDS), 2),
            k_d=self.k_d,
        )
        if self.prev_applied is not None:
            state.prev_zmp, state.prev_tau = self.prev_applied
        else:
            state.prev_zmp, state.prev_tau = float(zmp_ref[0]), 0.0

        problem, layout = build_mpc_qp(state, xi_ref, self.model, weights, bounds, sel,
                                       self.params, self.use_moment)
        warm = self._warm_start(layout)
        solution = solve_axis(problem, layout, warm_start=warm,
                              prev_solution=self.prev_solution)
        self.prev_solution = solution
        self.prev_applied = (solution.first_zmp, solution.first_tau)
        return solution

    def _warm_start(self, layout: MpcLayout) -> Optional[np.ndarray]:
        prev = self.prev_solution
        if prev is None or prev.primal is None:
            return None
        x = np.zeros(layout.n_vars)
        z = np.append(prev.zmp_seq[1:], prev.zmp_seq[-1])
        x[layout.z_idx] = z
        if layout.use_moment:
            x[layout.tau_idx] = np.append(prev.tau_seq[1:], prev.tau_seq[-1])
        m_common = min(layout.n_steps, prev.df.shape[0])
        if m_common:
            x[layout.df_idx[:m_common]] = prev.df[:m_common]
        return x

    def reset_horizon_memory(self) -> None:
        """Drop warm start and weight memory (used at touchdown rebase)."""
        self.prev_solution = None
