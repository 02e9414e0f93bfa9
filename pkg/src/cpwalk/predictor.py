"""Condensed horizon prediction of the capture point.

Stacking the one-tick CP recursion over ``N`` ticks gives

    Xi = phi_xi * xi_k + phi_p @ P

where ``Xi = [xi_{k+1} ... xi_{k+N}]`` and ``P`` interleaves the inputs as
``[z_k, tau_k, z_{k+1}, tau_{k+1}, ...]`` (length ``2N``).  This module is
the single place that fixes the interleaved input layout; all downstream
index math follows it: tick ``i``'s ZMP sits at index ``2*i`` and its
moment at ``2*i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import RobotParams


@dataclass(frozen=True)
class HorizonModel:
    """Prediction matrices for one axis over the horizon.

    ``phi_xi[k] = A**(k+1)`` and the (i, j) block of ``phi_p`` is
    ``A**(i-j) * B`` for ``j <= i`` (zero above the diagonal), with
    ``A = exp(omega*Ts)`` and ``B = [1-A, (1-A)/(m g)]``.
    """

    horizon: int
    a_scalar: float
    b_row: np.ndarray   # shape (2,)
    phi_xi: np.ndarray  # shape (N,)
    phi_p: np.ndarray   # shape (N, 2N)


def build_horizon_model(params: RobotParams) -> HorizonModel:
    """Build the condensed prediction matrices for ``params``."""
    n = params.horizon_ticks
    a = math.exp(params.omega_per_s * params.control_period_s)
    b = np.array([1.0 - a, (1.0 - a) / params.mg])

    powers = a ** np.arange(n + 1)          # A^0 ... A^N
    phi_xi = powers[1:].copy()

    phi_p = np.zeros((n, 2 * n))
    for i in range(n):
        # block (i, j) = A^(i-j) * B for j <= i
        phi_p[i, 0 : 2 * (i + 1) : 2] = powers[i::-1] * b[0]
        phi_p[i, 1 : 2 * (i + 1) : 2] = powers[i::-1] * b[1]

    phi_xi.setflags(write=False)
    phi_p.setflags(write=False)
    return HorizonModel(horizon=n, a_scalar=a, b_row=b, phi_xi=phi_xi, phi_p=phi_p)


def predict(model: HorizonModel, xi0: float, inputs: np.ndarray) -> np.ndarray:
    """Future CP trajectory from the current CP and an interleaved input vector."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (2 * model.horizon,):
        raise ValueError(
            f"expected interleaved inputs of length {2 * model.horizon}, got shape {inputs.shape}"
        )
    return model.phi_xi * xi0 + model.phi_p @ inputs
