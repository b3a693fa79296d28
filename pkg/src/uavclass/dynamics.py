"""Shared rigid-body kinematics and a fixed-step RK4 integrator.

Conventions:
  - Euler angles (phi, theta, psi) are roll, pitch, yaw in radians.
  - The body-to-inertial rotation is composed as Rx(phi) @ Ry(theta) @ Rz(psi).
  - The Euler-rate transform W(phi, theta) maps body rates (p, q, r) to
    Euler-angle rates and is singular at theta = +/- pi/2.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import GimbalSingularityError, IntegrationDivergedError

# Pitch angles closer than this to +/- pi/2 are treated as singular.
GIMBAL_GUARD = np.pi / 2 - 1e-6


def _check_finite_angles(*angles: float) -> None:
    for a in angles:
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite angle: {a!r}")


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-inertial rotation Rx(phi) @ Ry(theta) @ Rz(psi), as a 3x3 array."""
    _check_finite_angles(phi, theta, psi)
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cphi, -sphi], [0.0, sphi, cphi]])
    ry = np.array([[cth, 0.0, sth], [0.0, 1.0, 0.0], [-sth, 0.0, cth]])
    rz = np.array([[cpsi, -spsi, 0.0], [spsi, cpsi, 0.0], [0.0, 0.0, 1.0]])
    return rx @ ry @ rz


def rotation_entries(phi, theta, psi):
    """The nine entries of rotation_matrix as broadcastable expressions.

    Returns rows ((r00, r01, r02), (r10, ...), ...). Used by the vehicle
    derivative functions so they stay elementwise over batched states.
    """
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    return (
        (cth * cpsi, -cth * spsi, sth),
        (cphi * spsi + sphi * sth * cpsi, cphi * cpsi - sphi * sth * spsi, -sphi * cth),
        (sphi * spsi - cphi * sth * cpsi, sphi * cpsi + cphi * sth * spsi, cphi * cth),
    )


def euler_rate_transform(phi: float, theta: float) -> np.ndarray:
    """Transform W(phi, theta) from body rates (p, q, r) to Euler-angle rates.

    Raises GimbalSingularityError when |theta| is within 1e-6 rad of pi/2.
    """
    _check_finite_angles(phi, theta)
    if np.any(np.abs(theta) >= GIMBAL_GUARD):
        raise GimbalSingularityError(f"pitch {theta!r} too close to +/- pi/2")
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, tth = np.cos(theta), np.tan(theta)
    return np.array(
        [
            [1.0, sphi * tth, cphi * tth],
            [0.0, cphi, -sphi],
            [0.0, sphi / cth, cphi / cth],
        ]
    )


def euler_rates(phi, theta, p, q, r):
    """W(phi, theta) @ (p, q, r) written out elementwise; broadcastable.

    Same gimbal guard as euler_rate_transform.
    """
    if np.any(np.abs(theta) >= GIMBAL_GUARD):
        raise GimbalSingularityError("pitch too close to +/- pi/2")
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, tth = np.cos(theta), np.tan(theta)
    phi_dot = p + sphi * tth * q + cphi * tth * r
    theta_dot = cphi * q - sphi * r
    psi_dot = (sphi * q + cphi * r) / cth
    return phi_dot, theta_dot, psi_dot


DerivFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def rk4_step(
    deriv_fn: DerivFn,
    state: np.ndarray,
    control,
    dt: float,
    k1: np.ndarray | None = None,
) -> np.ndarray:
    """One classic 4th-order Runge-Kutta step with the control held constant.

    Raises IntegrationDivergedError (carrying the stage index 1..4) if any
    stage derivative is non-finite. ``k1`` may be passed when the caller has
    already evaluated deriv_fn(state, control) to avoid recomputing it.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")

    def stage(x: np.ndarray, idx: int) -> np.ndarray:
        k = deriv_fn(x, control)
        if not np.all(np.isfinite(k)):
            raise IntegrationDivergedError(
                f"non-finite derivative at RK4 stage {idx}", stage=idx
            )
        return k

    if k1 is None:
        k1 = stage(state, 1)
    elif not np.all(np.isfinite(k1)):
        raise IntegrationDivergedError("non-finite derivative at RK4 stage 1", stage=1)
    k2 = stage(state + 0.5 * dt * k1, 2)
    k3 = stage(state + 0.5 * dt * k2, 3)
    k4 = stage(state + dt * k3, 4)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
