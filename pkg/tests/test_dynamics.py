"""Kinematics and integrator tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavclass.dynamics import (
    euler_rate_transform,
    euler_rates,
    rk4_step,
    rotation_entries,
    rotation_matrix,
)
from uavclass.errors import GimbalSingularityError, IntegrationDivergedError

# R(0.1, 0.2, 0.3) computed independently at 40 decimal digits by composing
# the three elementary rotations with mpmath.
R_ORACLE = np.array([
    [0.936293363584199241, -0.289629477625515576, 0.198669330795061215],
    [0.312991825785467958, 0.944702485994894269, -0.0978433950072557114],
    [-0.159345079307977884, 0.153791997988964201, 0.975170327201815893],
])

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def test_rotation_identity_at_zero():
    assert np.array_equal(rotation_matrix(0.0, 0.0, 0.0), np.eye(3))


def test_rotation_roll_90deg():
    expected = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    assert np.allclose(rotation_matrix(np.pi / 2, 0.0, 0.0), expected, atol=1e-15)


def test_rotation_against_high_precision_oracle():
    assert np.allclose(rotation_matrix(0.1, 0.2, 0.3), R_ORACLE, atol=1e-15)


def test_rotation_orthonormal_for_1000_random_triples():
    rng = np.random.default_rng(0)
    for phi, theta, psi in rng.uniform(-np.pi, np.pi, (1000, 3)):
        r = rotation_matrix(phi, theta, psi)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


@given(angles, angles, angles)
@settings(max_examples=50, deadline=None)
def test_rotation_entries_match_matrix(phi, theta, psi):
    rows = rotation_entries(phi, theta, psi)
    r = rotation_matrix(phi, theta, psi)
    flat = np.array([rows[i][j] for i in range(3) for j in range(3)]).reshape(3, 3)
    assert np.allclose(flat, r, atol=1e-15)


def test_rotation_rejects_non_finite():
    with pytest.raises(ValueError):
        rotation_matrix(np.nan, 0.0, 0.0)
    with pytest.raises(ValueError):
        rotation_matrix(0.0, np.inf, 0.0)


def test_euler_rate_transform_identity_at_zero():
    assert np.array_equal(euler_rate_transform(0.0, 0.0), np.eye(3))


def test_euler_rate_transform_closed_form_entry():
    w = euler_rate_transform(np.pi / 6, np.pi / 6)
    assert w[0][1] == pytest.approx(0.288675134594812882, abs=1e-15)


def test_euler_rate_transform_gimbal_error():
    with pytest.raises(GimbalSingularityError):
        euler_rate_transform(0.0, np.pi / 2)
    with pytest.raises(GimbalSingularityError):
        euler_rate_transform(0.3, -np.pi / 2 + 1e-9)


@given(angles, st.floats(-1.5, 1.5), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_euler_rates_match_transform(phi, theta, p, q, r):
    rates = np.array(euler_rates(phi, theta, p, q, r))
    expected = euler_rate_transform(phi, theta) @ np.array([p, q, r])
    assert np.allclose(rates, expected, atol=1e-12)


def test_rk4_exponential_decay_one_step():
    out = rk4_step(lambda x, u: -x, np.array([1.0]), None, 0.1)
    assert out[0] == pytest.approx(np.exp(-0.1), abs=1e-7)
    assert out[0] == pytest.approx(0.9048375, abs=1e-12)  # exact RK4 value


def test_rk4_zero_derivative_is_identity():
    x0 = np.array([1.5, -2.0, 0.25])
    out = rk4_step(lambda x, u: np.zeros_like(x), x0, None, 0.3)
    assert np.array_equal(out, x0)


def test_rk4_constant_derivative_exact():
    out = rk4_step(lambda x, u: np.ones_like(x), np.array([0.0]), None, 0.5)
    assert out[0] == 0.5


def test_rk4_fourth_order_convergence():
    # global error on xdot = -x over [0, 1] should shrink ~16x when dt halves
    def integrate(dt):
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(lambda s, u: -s, x, None, dt)
        return abs(x[0] - np.exp(-1.0))

    ratio = integrate(0.1) / integrate(0.05)
    assert 14.0 <= ratio <= 18.0


def test_rk4_deterministic_bitwise():
    def f(x, u):
        return np.sin(x) - 0.3 * x

    x0 = np.array([0.7, -0.2])
    a = rk4_step(f, x0, None, 0.01)
    b = rk4_step(f, x0, None, 0.01)
    assert np.array_equal(a, b)


def test_rk4_diverged_carries_stage_index():
    def f(x, u):
        # finite at the initial state, NaN once the state moves
        return np.where(np.abs(x) > 1.0, np.nan, 1e3 * np.ones_like(x))

    with pytest.raises(IntegrationDivergedError) as err:
        rk4_step(f, np.array([0.5]), None, 0.1)
    assert err.value.stage == 2


def test_rk4_rejects_bad_dt():
    with pytest.raises(ValueError):
        rk4_step(lambda x, u: x, np.array([1.0]), None, 0.0)


def test_rk4_accepts_precomputed_k1():
    f = lambda x, u: -x
    x0 = np.array([1.0])
    assert np.array_equal(
        rk4_step(f, x0, None, 0.1), rk4_step(f, x0, None, 0.1, k1=f(x0, None))
    )
