"""Closed-form dynamics of the linear inverted pendulum with a flywheel.

The robot is abstracted as a point mass at constant height ``c_z`` with a
flywheel at the CoM.  Horizontal axes decouple, so every routine here works
on one axis at a time (or maps a 2D point axis-wise).

Conventions used throughout the package:

* ``omega = sqrt(g / c_z)`` is the natural frequency.
* The capture point (CP) is ``xi = c + c_dot / omega``.
* The centroidal moment pivot (CMP) is the ZMP shifted by the flywheel
  moment: ``p = z + moment / (m * g)``.
* Flywheel moments are carried as the per-axis effective pair
  ``(tau_y, -tau_x)``: entry 0 acts on the x-axis dynamics, entry 1 on the
  y-axis dynamics.  Centroidal angular momentum (CAM) is stored as the
  physical components ``(h_x, h_y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple


class PlanarPoint(NamedTuple):
    """A point (or vector) in the horizontal plane."""

    x_m: float
    y_m: float


class CamState(NamedTuple):
    """Centroidal angular momentum about the CoM, physical components."""

    h_x_Nms: float
    h_y_Nms: float

    def axis_pair(self) -> tuple[float, float]:
        """Momentum in per-axis layout ``(h_y, -h_x)``.

        Entry 0 is the momentum driven by the x-axis moment input
        ``tau_y``; entry 1 the one driven by the y-axis input ``-tau_x``.
        """
        return (self.h_y_Nms, -self.h_x_Nms)


def natural_frequency(gravity: float, com_height: float) -> float:
    """Pendulum natural frequency ``sqrt(g / c_z)``.

    Raises:
        ValueError: if either argument is not strictly positive.
    """
    if gravity <= 0.0 or com_height <= 0.0:
        raise ValueError(
            f"gravity and CoM height must be > 0, got g={gravity}, c_z={com_height}"
        )
    return math.sqrt(gravity / com_height)


@dataclass(frozen=True)
class RobotParams:
    """Reduced-model robot parameters and controller timing.

    ``omega_per_s`` is derived from gravity and CoM height on construction.
    ``horizon_ticks * control_period_s`` is the prediction horizon length.
    """

    mass_kg: float = 100.0
    com_height_m: float = 0.81
    gravity_mps2: float = 9.81
    control_period_s: float = 0.02
    horizon_ticks: int = 75
    omega_per_s: float = field(init=False)

    def __post_init__(self) -> None:
        if self.mass_kg <= 0.0:
            raise ValueError(f"mass must be > 0, got {self.mass_kg}")
        if self.control_period_s <= 0.0:
            raise ValueError(f"control period must be > 0, got {self.control_period_s}")
        if int(self.horizon_ticks) != self.horizon_ticks or self.horizon_ticks < 1:
            raise ValueError(f"horizon_ticks must be a positive integer, got {self.horizon_ticks}")
        object.__setattr__(
            self, "omega_per_s", natural_frequency(self.gravity_mps2, self.com_height_m)
        )

    @property
    def horizon_duration_s(self) -> float:
        return self.horizon_ticks * self.control_period_s

    @property
    def mg(self) -> float:
        return self.mass_kg * self.gravity_mps2


def capture_point(com: PlanarPoint, com_vel: PlanarPoint, omega: float) -> PlanarPoint:
    """CP from CoM state: ``xi = c + c_dot / omega`` per axis."""
    if omega <= 0.0:
        raise ValueError(f"omega must be > 0, got {omega}")
    return PlanarPoint(com.x_m + com_vel.x_m / omega, com.y_m + com_vel.y_m / omega)


def cmp_from_zmp_moment(
    zmp: PlanarPoint, moment_pair: tuple[float, float], params: RobotParams
) -> PlanarPoint:
    """CMP from ZMP and flywheel moment.

    ``moment_pair`` is the per-axis effective pair ``(tau_y, -tau_x)``, so
    ``p_x = z_x + tau_y/(m g)`` and ``p_y = z_y - tau_x/(m g)``.
    """
    mg = params.mg
    return PlanarPoint(zmp.x_m + moment_pair[0] / mg, zmp.y_m + moment_pair[1] / mg)


def cp_discrete_step(xi: float, zmp: float, moment: float, params: RobotParams) -> float:
    """One control-period CP update under piecewise-constant inputs.

    Single axis.  ``moment`` is the effective flywheel moment for that axis.
    Returns ``A*xi + B @ [zmp, moment]`` with ``A = exp(omega*Ts)`` and
    ``B = [1-A, (1-A)/(m g)]``.
    """
    a = math.exp(params.omega_per_s * params.control_period_s)
    return a * xi + (1.0 - a) * (zmp + moment / params.mg)


def cp_end_of_step(
    xi: PlanarPoint, cmp: PlanarPoint, t_elapsed: float, t_step: float, omega: float
) -> PlanarPoint:
    """CP at the end of the current step under a constant CMP.

    ``xi_T = (xi - p) * exp(omega * (T - t)) + p`` per axis, with ``t``
    the time elapsed since the step started and ``T`` the step duration.
    """
    if t_elapsed < 0.0 or t_elapsed > t_step:
        raise ValueError(
            f"elapsed time {t_elapsed} outside the step duration [0, {t_step}]"
        )
    growth = math.exp(omega * (t_step - t_elapsed))
    return PlanarPoint(
        (xi.x_m - cmp.x_m) * growth + cmp.x_m,
        (xi.y_m - cmp.y_m) * growth + cmp.y_m,
    )


def integrate_cam(cam: CamState, moment_pair: tuple[float, float], dt: float) -> CamState:
    """Explicit-Euler CAM update at the control rate.

    ``moment_pair`` is ``(tau_y, -tau_x)``: ``h_y`` integrates ``tau_y``
    and ``h_x`` integrates ``tau_x``.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    tau_y = moment_pair[0]
    tau_x = -moment_pair[1]
    return CamState(cam.h_x_Nms + tau_x * dt, cam.h_y_Nms + tau_y * dt)
