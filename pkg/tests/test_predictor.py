import time

import numpy as np
import pytest

from cpwalk.core_model import RobotParams, cp_discrete_step
from cpwalk.predictor import build_horizon_model, predict


@pytest.fixture(scope="module")
def params():
    return RobotParams()


@pytest.fixture(scope="module")
def model(params):
    return build_horizon_model(params)


def iterated_recursion(params, xi0, inputs):
    """Scalar one-tick recursion, the oracle for the condensed matrices."""
    xi = xi0
    out = []
    for k in range(params.horizon_ticks):
        xi = cp_discrete_step(xi, inputs[2 * k], inputs[2 * k + 1], params)
        out.append(xi)
    return np.array(out)


def test_single_step_horizon():
    p = RobotParams(horizon_ticks=1)
    m = build_horizon_model(p)
    assert m.phi_xi.shape == (1,)
    assert m.phi_xi[0] == pytest.approx(m.a_scalar)
    assert np.allclose(m.phi_p, m.b_row[None, :])


def test_block_structure_n3():
    p = RobotParams(horizon_ticks=3)
    m = build_horizon_model(p)
    a, b = m.a_scalar, m.b_row
    assert np.allclose(m.phi_p[2, 0:2], a**2 * b)
    assert np.allclose(m.phi_p[2, 2:4], a * b)
    assert np.allclose(m.phi_p[2, 4:6], b)
    assert np.allclose(m.phi_p[0, 2:], 0.0)
    assert np.allclose(m.phi_xi, [a, a**2, a**3])


def test_condensed_matches_recursion_100_random(params, model):
    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        xi0 = rng.uniform(-0.3, 0.3)
        inputs = np.empty(2 * params.horizon_ticks)
        inputs[0::2] = rng.uniform(-0.2, 0.2, params.horizon_ticks)
        inputs[1::2] = rng.uniform(-15.0, 15.0, params.horizon_ticks)
        diff = np.max(np.abs(predict(model, xi0, inputs) - iterated_recursion(params, xi0, inputs)))
        worst = max(worst, diff)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9
    assert elapsed < 1.0


def test_fixed_point_trajectory(params, model):
    xi0 = 0.08
    inputs = np.zeros(2 * params.horizon_ticks)
    inputs[0::2] = xi0
    assert np.allclose(predict(model, xi0, inputs), xi0, atol=1e-12)


def test_zero_inputs_zero_state(model):
    assert np.all(predict(model, 0.0, np.zeros(2 * model.horizon)) == 0.0)


def test_linearity(model):
    rng = np.random.default_rng(3)
    p1 = rng.normal(size=2 * model.horizon)
    p2 = rng.normal(size=2 * model.horizon)
    xi0 = 0.05
    lhs = predict(model, xi0, p1 + p2)
    rhs = predict(model, xi0, p1) + predict(model, 0.0, p2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_length_mismatch_raises(model):
    with pytest.raises(ValueError):
        predict(model, 0.0, np.zeros(2 * model.horizon - 1))
