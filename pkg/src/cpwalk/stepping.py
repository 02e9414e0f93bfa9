"""Footstep-position and step-time adjustment on top of the horizon MPC.

The MPC plans footstep adjustments over its horizon; this controller
turns the first of them into an executable commitment.  Nominal values
come from the plan and the MPC output, then a small QP trades footstep
error, step-time error and CP-offset error subject to the end-of-step
equality

    f + b = (xi - P_ssp) e^{-w t} gamma + P_ssp        per axis,

where ``gamma = e^{w T}`` keeps the constraint linear in the decision
variables ``[f_x, f_y, gamma, b_x, b_y]``.  The step time couples both
axes, so the two axes share one QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core_model import PlanarPoint, RobotParams
from .qp_solver import QpProblem, QpStatus, solve_qp

W_F_DEFAULT = 1000.0
W_GAMMA_DEFAULT = 1.0
W_B_DEFAULT = 3000.0
F_BOX_HALFWIDTH_M = 0.05
B_BOX_HALFWIDTH_M = 0.10
T_BAND_HALFWIDTH_S = 0.2


@dataclass(frozen=True)
class SteppingWeights:
    w_f: float = W_F_DEFAULT
    w_gamma: float = W_GAMMA_DEFAULT
    w_b: float = W_B_DEFAULT


@dataclass(frozen=True)
class SteppingBoxes:
    f_halfwidth_m: float = F_BOX_HALFWIDTH_M
    b_halfwidth_m: float = B_BOX_HALFWIDTH_M
    t_band_s: float = T_BAND_HALFWIDTH_S


@dataclass
class SteppingNominals:
    f_nom: PlanarPoint
    b_nom: PlanarPoint
    gamma_nom: float
    p_ssp: PlanarPoint


@dataclass
class SteppingSolution:
    f: PlanarPoint
    gamma: float
    b: PlanarPoint
    step_time_s: float
    status: QpStatus
    equality_residual: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def nominal_footstep(f1_ref: PlanarPoint, df1: PlanarPoint) -> PlanarPoint:
    """Planned next footstep plus the MPC's first adjustment."""
    return PlanarPoint(f1_ref.x_m + df1.x_m, f1_ref.y_m + df1.y_m)


def nominal_cp_offset(xi_t_ref: PlanarPoint, f1_ref: PlanarPoint) -> PlanarPoint:
    """Reference end-of-step CP relative to the planned next footstep."""
    return PlanarPoint(xi_t_ref.x_m - f1_ref.x_m, xi_t_ref.y_m - f1_ref.y_m)


def nominal_step_time_term(t_ref_s: float, omega: float) -> float:
    return math.exp(omega * t_ref_s)


def cmp_parameter(
    zmp_seq: Sequence[np.ndarray],
    tau_seq: Sequence[np.ndarray],
    ticks_remaining_ssp: int,
    params: RobotParams,
) -> PlanarPoint:
    """Average CMP implied by the MPC inputs over the remaining single support.

    ``zmp_seq``/``tau_seq`` hold one horizon vector per axis (x, y).
    """
    if ticks_remaining_ssp < 1:
        raise ValueError("need at least one remaining single-support tick")
    vals = []
    for axis in (0, 1):
        z = np.asarray(zmp_seq[axis], dtype=float)[:ticks_remaining_ssp]
        t = np.asarray(tau_seq[axis], dtype=float)[:ticks_remaining_ssp]
        if z.shape[0] < ticks_remaining_ssp:
            raise ValueError("sequences shorter than the remaining single support")
        vals.append(float(np.mean(z + t / params.mg)))
    return PlanarPoint(vals[0], vals[1])


def solve_stepping(
    nominals: SteppingNominals,
    xi: PlanarPoint,
    t_elapsed: float,
    omega: float,
    t_nom_step_s: float,
    boxes: SteppingBoxes = SteppingBoxes(),
    weights: SteppingWeights = SteppingWeights(),
    adjust_step_time: bool = True,
    warm_start: Optional[np.ndarray] = None,
) -> SteppingSolution:
    """Jointly pick the next footstep, step-time term and CP offset.

    With ``adjust_step_time`` off (strategy ablation) the step-time term
    is pinned at its nominal value and only the footstep moves.
    """
    decay = math.exp(-omega * t_elapsed)
    kappa = np.array(
        [(xi.x_m - nominals.p_ssp.x_m) * decay, (xi.y_m - nominals.p_ssp.y_m) * decay]
    )

    h = np.diag([2 * weights.w_f, 2 * weights.w_f, 2 * weights.w_gamma,
                 2 * weights.w_b, 2 * weights.w_b])
    nom = np.array([nominals.f_nom.x_m, nominals.f_nom.y_m, nominals.gamma_nom,
                    nominals.b_nom.x_m, nominals.b_nom.y_m])
    g = -h @ nom

    eq = np.array(
        [
            [1.0, 0.0, -kappa[0], 1.0, 0.0],
            [0.0, 1.0, -kappa[1], 0.0, 1.0],
        ]
    )
    eq_rhs = np.array([nominals.p_ssp.x_m, nominals.p_ssp.y_m])

    if adjust_step_time:
        g_lo = math.exp(omega * (t_nom_step_s - boxes.t_band_s))
        g_hi = math.exp(omega * (t_nom_step_s + boxes.t_band_s))
    else:
        g_lo = g_hi = nominals.gamma_nom
    lo = np.array(
        [
            nominals.f_nom.x_m - boxes.f_halfwidth_m,
            nominals.f_nom.y_m - boxes.f_halfwidth_m,
            g_lo,
            nominals.b_nom.x_m - boxes.b_halfwidth_m,
            nominals.b_nom.y_m - boxes.b_halfwidth_m,
        ]
    )
    hi = np.array(
        [
            nominals.f_nom.x_m + boxes.f_halfwidth_m,
            nominals.f_nom.y_m + boxes.f_halfwidth_m,
            g_hi,
            nominals.b_nom.x_m + boxes.b_halfwidth_m,
            nominals.b_nom.y_m + boxes.b_halfwidth_m,
        ]
    )

    problem = QpProblem(h, g, np.eye(5), lo, hi, eq, eq_rhs)
    sol = solve_qp(problem, warm_start=warm_start)
    if sol.status is not QpStatus.OPTIMAL:
        return SteppingSolution(nominals.f_nom, nominals.gamma_nom, nominals.b_nom,
                                t_nom_step_s, sol.status)
    x = sol.primal
    residual = float(np.max(np.abs(eq @ x - eq_rhs)))
    gamma = float(x[2])
    return SteppingSolution(
        f=PlanarPoint(float(x[0]), float(x[1])),
        gamma=gamma,
        b=PlanarPoint(float(x[3]), float(x[4])),
        step_time_s=math.log(gamma) / omega,
        status=sol.status,
        equality_residual=residual,
    )
