"""Ground-truth pendulum-flywheel plant.

Integrates the CoM under the commanded ZMP and flywheel moment with a
closed-form update per substep (exact for piecewise-constant inputs, so
acceptance checks carry no integration-error confound).  The plant is
the authority on physical limits: commanded ZMPs are clamped to the true
support region, moments to the actuation box, and the flywheel momentum
to its saturation band - the controller only ever gets what the plant
actually applied.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .core_model import CamState, PlanarPoint, RobotParams, capture_point
from .gait_reference import Side

PLANT_DT_S = 0.001
FOOT_HALF_LENGTH_M = 0.15   # 30 cm foot, x direction
FOOT_HALF_WIDTH_M = 0.07    # 14 cm foot, y direction
CAM_LIMIT_NMS = 1.5
MOMENT_LIMIT_NM = 15.0

FALL_CP_DISTANCE_M = 0.7
FALL_CP_ERROR_M = 0.5
FALL_CP_ERROR_HOLD_S = 1.0


class Phase(enum.Enum):
    SSP = "SSP"
    DSP = "DSP"


@dataclass(frozen=True)
class PlantLimits:
    dt_s: float = PLANT_DT_S
    foot_half_x_m: float = FOOT_HALF_LENGTH_M
    foot_half_y_m: float = FOOT_HALF_WIDTH_M
    cam_limit_nms: float = CAM_LIMIT_NMS
    moment_limit_nm: float = MOMENT_LIMIT_NM


@dataclass(frozen=True)
class PushDisturbance:
    force_n: PlanarPoint
    t_start_s: float
    duration_s: float

    def __post_init__(self) -> None:
        if self.duration_s <= 0.0:
            raise ValueError("push duration must be positive")

    def active(self, t: float) -> bool:
        return self.t_start_s <= t < self.t_start_s + self.duration_s

    @property
    def impulse_ns(self) -> float:
        return math.hypot(self.force_n.x_m, self.force_n.y_m) * self.duration_s


@dataclass(frozen=True)
class TouchdownCpShift:
    """Terrain-contact proxy: the CP jumps by ``offset`` at a touchdown."""

    offset_m: PlanarPoint
    step_index: int


@dataclass(frozen=True)
class PlantState:
    com: PlanarPoint
    com_vel: PlanarPoint
    cam: CamState
    support_side: Side
    support_pos: PlanarPoint
    phase: Phase
    phase_clock_s: float
    time_s: float
    landing_pos: Optional[PlanarPoint] = None  # incoming foot during DSP
    step_count: int = 0

    def capture_point(self, omega: float) -> PlanarPoint:
        return capture_point(self.com, self.com_vel, omega)

    def ground_feet(self) -> list[PlanarPoint]:
        feet = [self.support_pos]
        if self.phase is Phase.DSP and self.landing_pos is not None:
            feet.append(self.landing_pos)
        return feet


def _clamp_zmp(state: PlantState, zmp: PlanarPoint, limits: PlantLimits) -> PlanarPoint:
    """Hard-clamp the commanded ZMP to the physical support region
    (axis-aligned hull of the feet on the ground)."""
    feet = state.ground_feet()
    lo_x = min(f.x_m for f in feet) - limits.foot_half_x_m
    hi_x = max(f.x_m for f in feet) + limits.foot_half_x_m
    lo_y = min(f.y_m for f in feet) - limits.foot_half_y_m
    hi_y = max(f.y_m for f in feet) + limits.foot_half_y_m
    return PlanarPoint(min(max(zmp.x_m, lo_x), hi_x), min(max(zmp.y_m, lo_y), hi_y))


def _apply_cam_limits(
    cam: CamState, moment_pair: tuple[float, float], dt: float, limits: PlantLimits
) -> tuple[CamState, tuple[float, float]]:
    """Clamp the moment box, then trim so the momentum stays in its band.

    A saturated flywheel cannot absorb further torque, so the trimmed
    moment is also what acts on the CoM.
    """
    lim = limits.moment_limit_nm
    band = limits.cam_limit_nms
    applied = []
    h_axis = list(cam.axis_pair())
    for axis in (0, 1):
        u = min(max(moment_pair[axis], -lim), lim)
        h_next = h_axis[axis] + u * dt
        if h_next > band:
            u = (band - h_axis[axis]) / dt
        elif h_next < -band:
            u = (-band - h_axis[axis]) / dt
        applied.append(u)
        h_axis[axis] = h_axis[axis] + u * dt
    new_cam = CamState(h_x_Nms=-h_axis[1], h_y_Nms=h_axis[0])
    return new_cam, (applied[0], applied[1])


def plant_step(
    state: PlantState,
    zmp_cmd: PlanarPoint,
    moment_cmd: tuple[float, float],
    pushes: list[PushDisturbance],
    params: RobotParams,
    limits: PlantLimits,
    dt: Optional[float] = None,
) -> PlantState:
    """One closed-form substep under held commands and active pushes."""
    dt = limits.dt_s if dt is None else dt
    if not 0.0 < dt <= 0.005:
        raise ValueError(f"plant substep must be in (0, 0.005], got {dt}")
    omega = params.omega_per_s
    zmp = _clamp_zmp(state, zmp_cmd, limits)
    cam, moment = _apply_cam_limits(state.cam, moment_cmd, dt, limits)

    fx = sum(p.force_n.x_m for p in pushes if p.active(state.time_s))
    fy = sum(p.force_n.y_m for p in pushes if p.active(state.time_s))

    ch, sh = math.cosh(omega * dt), math.sinh(omega * dt)
    pos, vel = [], []
    for c, v, z, u, f in (
        (state.com.x_m, state.com_vel.x_m, zmp.x_m, moment[0], fx),
        (state.com.y_m, state.com_vel.y_m, zmp.y_m, moment[1], fy),
    ):
        # c'' = w^2 (c - p_eff) with the push folded into the pivot.
        p_eff = z + u / params.mg - f / (params.mass_kg * omega**2)
        rel = c - p_eff
        pos.append(p_eff + rel * ch + (v / omega) * sh)
        vel.append(rel * omega * sh + v * ch)

    return replace(
        state,
        com=PlanarPoint(pos[0], pos[1]),
        com_vel=PlanarPoint(vel[0], vel[1]),
        cam=cam,
        phase_clock_s=state.phase_clock_s + dt,
        time_s=state.time_s + dt,
    )


def advance_phase(
    state: PlantState,
    committed_footstep: PlanarPoint,
    committed_ssp_s: float,
    t_dsp_s: float,
) -> PlantState:
    """Phase transitions: touchdown at the committed single-support end,
    support exchange when the double support completes."""
    if state.phase is Phase.SSP and state.phase_clock_s >= committed_ssp_s - 1e-12:
        return replace(
            state,
            phase=Phase.DSP,
            landing_pos=committed_footstep,
            phase_clock_s=0.0,
            step_count=state.step_count + 1,
        )
    if state.phase is Phase.DSP and state.phase_clock_s >= t_dsp_s - 1e-12:
        return replace(
            state,
            phase=Phase.SSP,
            support_side=state.support_side.other,
            support_pos=state.landing_pos,
            landing_pos=None,
            phase_clock_s=0.0,
        )
    return state


def apply_cp_shift(state: PlantState, offset: PlanarPoint, omega: float) -> PlantState:
    """Shift the CP by ``offset`` (CoM moves, velocity kept)."""
    return replace(
        state,
        com=PlanarPoint(state.com.x_m + offset.x_m, state.com.y_m + offset.y_m),
    )


class FallDetector:
    """Declares a fall when the CP leaves the reachable neighborhood of the
    ground feet, or the CP error stays large for a sustained interval."""

    def __init__(
        self,
        distance_limit_m: float = FALL_CP_DISTANCE_M,
        error_limit_m: float = FALL_CP_ERROR_M,
        error_hold_s: float = FALL_CP_ERROR_HOLD_S,
    ):
        self.distance_limit_m = distance_limit_m
        self.error_limit_m = error_limit_m
        self.error_hold_s = error_hold_s
        self._error_timer = 0.0

    def update(self, state: PlantState, xi_ref: PlanarPoint, omega: float, dt: float) -> bool:
        xi = state.capture_point(omega)
        dist = min(
            math.hypot(xi.x_m - f.x_m, xi.y_m - f.y_m) for f in state.ground_feet()
        )
        if dist > self.distance_limit_m:
            return True
        err = math.hypot(xi.x_m - xi_ref.x_m, xi.y_m - xi_ref.y_m)
        if err > self.error_limit_m:
            self._error_timer += dt
        else:
            self._error_timer = 0.0
        return self._error_timer > self.error_hold_s


def detect_fall(state: PlantState, xi_ref: PlanarPoint, omega: float,
                detector: Optional[FallDetector] = None, dt: float = PLANT_DT_S) -> bool:
    """Stateless wrapper for one-shot checks (the runner holds a detector)."""
    det = detector or FallDetector()
    return det.update(state, xi_ref, omega, dt)
