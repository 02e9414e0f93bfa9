"""Footstep planning and reference trajectory generation.

A plan is an ordered list of footsteps; each step ``k`` owns one gait
cycle: a single-support phase on foot ``k`` followed by a double-support
transfer to foot ``k+1``.  The last planned step is a terminal stance and
extends indefinitely.

The reference ZMP sits at the support-foot center during single support
and interpolates linearly between the adjacent centers during double
support.  The reference CP comes from a backward recursion of the
end-of-step dynamics: anchored at the terminal stance center, each
segment is propagated backward in closed form (constant or linearly
varying ZMP), which makes the reference exactly consistent with the
pendulum dynamics - forward-integrating the CP ODE under the reference
ZMP reproduces it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_model import PlanarPoint

DEFAULT_STEP_SPACING_M = 0.205
SELF_COLLISION_MARGIN_M = 0.06


class Side(enum.Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


@dataclass(frozen=True)
class GaitParams:
    """Nominal gait timing and geometry."""

    step_length_m: float = 0.0        # forward advance per step (L)
    step_width_dev_m: float = 0.0     # lateral drift per step (W)
    step_spacing_m: float = DEFAULT_STEP_SPACING_M  # default foot spacing (D)
    t_ssp_s: float = 0.6
    t_dsp_s: float = 0.3

    @property
    def t_step_s(self) -> float:
        return self.t_ssp_s + self.t_dsp_s


@dataclass(frozen=True)
class Footstep:
    position: PlanarPoint
    side: Side
    t_start: float
    t_ssp: float
    t_dsp: float

    @property
    def t_end(self) -> float:
        return self.t_start + self.t_ssp + self.t_dsp

    @property
    def touchdown_time(self) -> float:
        """When the next foot lands: end of this step's single support."""
        return self.t_start + self.t_ssp


class PlanError(ValueError):
    pass


@dataclass
class FootstepPlan:
    steps: list[Footstep]

    def __post_init__(self) -> None:
        if len(self.steps) < 2:
            raise PlanError("a footstep plan needs at least two steps")
        for a, b in zip(self.steps, self.steps[1:]):
            if b.side is a.side:
                raise PlanError("support sides must alternate")
            if b.t_start <= a.t_start:
                raise PlanError("step start times must strictly increase")
            if abs(b.position.y_m - a.position.y_m) < SELF_COLLISION_MARGIN_M:
                raise PlanError(
                    f"lateral spacing {abs(b.position.y_m - a.position.y_m):.3f} m "
                    f"violates the {SELF_COLLISION_MARGIN_M} m self-collision margin"
                )

    def index_at(self, t: float) -> int:
        """Step whose cycle contains ``t`` (clamped to the plan ends)."""
        idx = len(self.steps) - 1
        for k, s in enumerate(self.steps):
            if t < s.t_end or k == len(self.steps) - 1:
                idx = k
                break
        return max(0, idx)

    def phase_at(self, t: float) -> tuple[str, int]:
        """Phase label at ``t``: ('ssp'|'dsp', step index)."""
        k = self.index_at(t)
        s = self.steps[k]
        if k == len(self.steps) - 1 or t < s.touchdown_time:
            return "ssp", k
        return "dsp", k


def plan_footsteps(
    vel_cmd: PlanarPoint,
    n_steps: int,
    gait: GaitParams,
    start_side: Side = Side.LEFT,
    start_position: Optional[PlanarPoint] = None,
    t_start: float = 0.0,
    per_step_vel: Optional[Sequence[PlanarPoint]] = None,
) -> FootstepPlan:
    """Plan alternating footsteps from a velocity command.

    Per step the plan advances ``L = v_x * T`` forward and drifts
    ``W = v_y * T`` laterally while keeping the feet ``D`` apart.  A
    ``per_step_vel`` sequence overrides the constant command step by step
    (entry ``k`` shapes the displacement from step ``k`` to ``k+1``).
    """
    if n_steps < 2:
        raise PlanError("n_steps must be at least 2")
    d = gait.step_spacing_m
    side = start_side
    lat = 0.5 if side is Side.LEFT else -0.5
    pos = start_position if start_position is not None else PlanarPoint(0.0, lat * d)
    center_y = pos.y_m - lat * d

    steps = [Footstep(pos, side, t_start, gait.t_ssp_s, gait.t_dsp_s)]
    x, t = pos.x_m, t_start
    for k in range(1, n_steps):
        v = per_step_vel[min(k - 1, len(per_step_vel) - 1)] if per_step_vel else vel_cmd
        x += v.x_m * gait.t_step_s
        center_y += v.y_m * gait.t_step_s
        side = side.other
        lat = 0.5 if side is Side.LEFT else -0.5
        t += gait.t_step_s
        steps.append(
            Footstep(PlanarPoint(x, center_y + lat * d), side, t, gait.t_ssp_s, gait.t_dsp_s)
        )
    return FootstepPlan(steps)


def replan_from_support(
    plan: FootstepPlan,
    support: Footstep,
    vel_cmd: PlanarPoint,
    n_steps: int,
    gait: GaitParams,
    per_step_vel: Optional[Sequence[PlanarPoint]] = None,
) -> FootstepPlan:
    """Regenerate the future plan relative to a (possibly adjusted) support foot."""
    return plan_footsteps(
        vel_cmd,
        n_steps,
        gait,
        start_side=support.side,
        start_position=support.position,
        t_start=support.t_start,
        per_step_vel=per_step_vel,
    )


def zmp_reference(plan: FootstepPlan, times: np.ndarray) -> np.ndarray:
    """Reference ZMP at ``times``; shape (len(times), 2).

    Foot center during single support, linear interpolation during double
    support, terminal stance repeated beyond the plan.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((times.shape[0], 2))
    positions = np.array([[s.position.x_m, s.position.y_m] for s in plan.steps])
    starts = np.array([s.t_start for s in plan.steps])
    # Index of the step whose cycle contains each query time.
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(plan.steps) - 1)
    for k in np.unique(idx):
        s = plan.steps[k]
        mask = idx == k
        tk = times[mask]
        z = np.repeat(positions[k][None, :], tk.shape[0], axis=0)
        if k < len(plan.steps) - 1 and s.t_dsp > 0.0:
            alpha = np.clip((tk - s.touchdown_time) / s.t_dsp, 0.0, 1.0)
            z = z + alpha[:, None] * (positions[k + 1] - positions[k])[None, :]
        out[mask] = z
    return out


@dataclass
class _Segment:
    t0: float
    t1: float
    z0: np.ndarray      # ZMP at t0, shape (2,)
    slope: np.ndarray   # dZMP/dt, shape (2,)
    xi1: np.ndarray = field(default=None)  # CP at t1, filled by the backward pass


class CpReference:
    """Analytic reference CP trajectory over a footstep plan.

    Built by a backward pass from the terminal stance center; ``eval``
    returns the CP at arbitrary times inside (or beyond) the plan.
    """

    def __init__(self, plan: FootstepPlan, omega: float):
        self.omega = omega
        self.terminal_time = plan.steps[-1].t_start
        self.terminal_xi = np.array(
            [plan.steps[-1].position.x_m, plan.steps[-1].position.y_m]
        )
        segments: list[_Segment] = []
        for k, s in enumerate(plan.steps[:-1]):
            pos = np.array([s.position.x_m, s.position.y_m])
            nxt = np.array([plan.steps[k + 1].position.x_m, plan.steps[k + 1].position.y_m])
            segments.append(_Segment(s.t_start, s.touchdown_time, pos, np.zeros(2)))
            if s.t_dsp > 0.0:
                segments.append(
                    _Segment(s.touchdown_time, s.t_end, pos, (nxt - pos) / s.t_dsp)
                )
        xi_next = self.terminal_xi.copy()
        for seg in reversed(segments):
            seg.xi1 = xi_next
            xi_next = self._eval_segment(seg, np.array([seg.t0]))[0]
        self.segments = segments
        self.start_xi = xi_next
        self._bounds = np.array([seg.t0 for seg in segments] + [self.terminal_time])

    def _eval_segment(self, seg: _Segment, t: np.ndarray) -> np.ndarray:
        # Backward closed form: with z(t) = z0 + s*(t - t0), the CP obeys
        # xi(t) = (xi1 - z(t1) - s/w) * exp(w*(t - t1)) + z(t) + s/w.
        w = self.omega
        z_t1 = seg.z0 + seg.slope * (seg.t1 - seg.t0)
        coeff = seg.xi1 - z_t1 - seg.slope / w
        decay = np.exp(w * (t - seg.t1))[:, None]
        z_t = seg.z0[None, :] + seg.slope[None, :] * (t - seg.t0)[:, None]
        return coeff[None, :] * decay + z_t + seg.slope[None, :] / w

    def eval(self, times: np.ndarray) -> np.ndarray:
        """Reference CP at ``times``; shape (len(times), 2)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.shape[0], 2))
        terminal = times >= self.terminal_time
        out[terminal] = self.terminal_xi
        before = times < self.segments[0].t0 if self.segments else ~terminal
        out[before] = self.start_xi
        inside = ~terminal & ~before
        if np.any(inside):
            t_in = times[inside]
            idx = np.clip(np.searchsorted(self._bounds, t_in, side="right") - 1, 0,
                          len(self.segments) - 1)
            vals = np.empty((t_in.shape[0], 2))
            for k in np.unique(idx):
                mask = idx == k
                vals[mask] = self._eval_segment(self.segments[k], t_in[mask])
            out[inside] = vals
        return out

    def eval_point(self, t: float) -> PlanarPoint:
        v = self.eval(np.array([t]))[0]
        return PlanarPoint(float(v[0]), float(v[1]))


def cp_reference(plan: FootstepPlan, omega: float) -> CpReference:
    """Reference CP trajectory for ``plan`` (backward end-of-step recursion)."""
    return CpReference(plan, omega)


@dataclass
class ZmpMargins:
    """Allowed ZMP band around the reference, per axis (lower is subtracted)."""

    x_below: float = 0.09
    x_above: float = 0.12
    y_below: float = 0.07
    y_above: float = 0.07

    def lower(self) -> np.ndarray:
        return np.array([self.x_below, self.y_below])

    def upper(self) -> np.ndarray:
        return np.array([self.x_above, self.y_above])


@dataclass
class HorizonRefs:
    """Per-tick references and bounds over the prediction horizon.

    Input quantities (``zmp_ref``, bounds, ``phase``) are sampled at the
    input ticks ``t + i*Ts``; the tracking reference ``xi_ref`` at the
    predicted states ``t + (i+1)*Ts``.
    """

    xi_ref: np.ndarray        # (N, 2)
    zmp_ref: np.ndarray       # (N, 2)
    zmp_lb: np.ndarray        # (N, 2)
    zmp_ub: np.ndarray        # (N, 2)
    phase: list[str]          # (N,) labels: SSP-L / SSP-R / DSP
    activation_ticks: list[int]   # first horizon tick of each future footstep's support
    xi_T_ref: PlanarPoint
    f1_ref: PlanarPoint


def build_horizon_refs(
    plan: FootstepPlan,
    cpref: CpReference,
    t_now: float,
    n_ticks: int,
    dt: float,
    margins: ZmpMargins,
    max_future_steps: int = 3,
) -> HorizonRefs:
    """Assemble references, bounds, phase labels and the footstep schedule."""
    t_inputs = t_now + dt * np.arange(n_ticks)
    t_states = t_inputs + dt

    zmp_ref = zmp_reference(plan, t_inputs)
    xi_ref = cpref.eval(t_states)

    positions = np.array([[s.position.x_m, s.position.y_m] for s in plan.steps])
    lo, hi = margins.lower(), margins.upper()
    zmp_lb = np.empty_like(zmp_ref)
    zmp_ub = np.empty_like(zmp_ref)
    phase: list[str] = []
    for i, t in enumerate(t_inputs):
        ph, k = plan.phase_at(t)
        if ph == "ssp":
            phase.append(f"SSP-{plan.steps[k].side.value}")
            zmp_lb[i] = positions[k] - lo
            zmp_ub[i] = positions[k] + hi
        else:
            phase.append("DSP")
            pair = positions[k : k + 2]
            zmp_lb[i] = pair.min(axis=0) - lo
            zmp_ub[i] = pair.max(axis=0) + hi

    horizon_end = t_now + n_ticks * dt
    activation_ticks: list[int] = []
    for s in plan.steps[:-1]:
        td = s.touchdown_time
        if td <= t_now + 1e-12 or td >= horizon_end - 1e-12:
            continue
        tick = int(math.ceil((td - t_now) / dt - 1e-9))
        if tick < n_ticks and len(activation_ticks) < max_future_steps:
            activation_ticks.append(tick)

    ph_now, k_now = plan.phase_at(t_now)
    next_idx = min(k_now + (1 if ph_now == "ssp" else 2), len(plan.steps) - 1)
    f1_ref = plan.steps[next_idx].position
    xi_T_ref = cpref.eval_point(plan.steps[k_now].t_end)

    return HorizonRefs(
        xi_ref=xi_ref,
        zmp_ref=zmp_ref,
        zmp_lb=zmp_lb,
        zmp_ub=zmp_ub,
        phase=phase,
        activation_ticks=activation_ticks,
        xi_T_ref=xi_T_ref,
        f1_ref=f1_ref,
    )
