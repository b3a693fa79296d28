"""Vehicle parameter sets and class-specific state-derivative functions.

State vector layouts (12 entries, SI units):
  - quadcopter / helicopter: [x, y, z, vx, vy, vz, phi, theta, psi, p, q, r]
    with inertial position/velocity, z up (gravity enters as -g).
  - fixed-wing: [u, v, w, p, q, r, phi, theta, psi, x, y, z] with body-frame
    velocity (u, v, w), z down in the body force equations (gravity +mg).

Control vector layouts (4 entries):
  - quadcopter: motor angular speeds (w1, w2, w3, w4) in rad/s.
  - fixed-wing: (throttle in [0, 1], aileron, elevator, rudder in rad).
  - helicopter: (main thrust N, tail thrust N, cyclic roll rad, cyclic pitch rad).

All derivative functions broadcast over leading axes: a state batch of shape
(N, 12) with controls (N, 4) yields derivatives (N, 12).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import IntEnum
from importlib import resources
import hashlib

import numpy as np

from .dynamics import euler_rates, rotation_entries
from .errors import ParameterFileError


class UavClass(IntEnum):
    QUADCOPTER = 0
    FIXED_WING = 1
    HELICOPTER = 2


CLASS_NAMES = {
    UavClass.QUADCOPTER: "quadcopter",
    UavClass.FIXED_WING: "fixed-wing",
    UavClass.HELICOPTER: "helicopter",
}


@dataclass(frozen=True)
class QuadParams:
    """Quadcopter physical constants (all strictly positive)."""

    m: float
    g: float
    ixx: float
    iyy: float
    izz: float
    l_arm: float
    k_t: float        # thrust per squared motor speed, N s^2
    k_d: float        # drag torque per squared motor speed, N m s^2
    k_drag_v: float   # linear velocity drag, N s/m
    k_drag_w: float   # angular rate drag, N m s

    def __post_init__(self):
        _require_positive(self)


@dataclass(frozen=True)
class FixedWingParams:
    """Fixed-wing physical constants and affine aerodynamic coefficient model.

    Coefficient model:
      C_L = CL0 + CL_alpha * alpha + CL_de * de
      C_D = CD0 + CD_k * C_L^2 + CD_de * de^2
      C_y = Cy_beta * beta + Cy_dr * dr
      C_l = Cl_beta * beta + Cl_da * da      (roll moment)
      C_m = Cm0 + Cm_alpha * alpha + Cm_de * de
      C_n = Cn_beta * beta + Cn_dr * dr
    """

    m: float
    g: float
    ixx: float
    iyy: float
    izz: float
    rho: float        # air density, kg/m^3
    S: float          # wing area, m^2
    b: float          # wingspan, m
    c_chord: float    # mean aerodynamic chord, m
    D: float          # propeller diameter, m
    C_t: float        # propeller thrust coefficient
    omega_in: float   # max propeller speed, rad/s
    CL0: float
    CL_alpha: float
    CL_de: float
    CD0: float
    CD_k: float
    CD_de: float
    Cy_beta: float
    Cy_dr: float
    Cl_beta: float
    Cl_da: float
    Cm0: float
    Cm_alpha: float
    Cm_de: float
    Cn_beta: float
    Cn_dr: float

    def __post_init__(self):
        for name in ("m", "g", "ixx", "iyy", "izz", "rho", "S", "b", "c_chord",
                     "D", "omega_in"):
            if getattr(self, name) <= 0.0:
                raise ParameterFileError(f"{name} must be > 0")
        if self.CD0 < 0.0:
            raise ParameterFileError("CD0 must be >= 0")


@dataclass(frozen=True)
class HeliParams:
    """Helicopter physical constants (all strictly positive)."""

    m: float
    g: float
    ixx: float
    iyy: float
    izz: float
    l_arm: float      # main rotor moment arm, m
    d_tail: float     # main-to-rear rotor distance, m
    k_drag_v: float
    k_drag_w: float

    def __post_init__(self):
        _require_positive(self)


def _require_positive(params) -> None:
    for f in fields(params):
        if getattr(params, f.name) <= 0.0:
            raise ParameterFileError(f"{f.name} must be > 0")


PARAMS_TYPE = {
    UavClass.QUADCOPTER: QuadParams,
    UavClass.FIXED_WING: FixedWingParams,
    UavClass.HELICOPTER: HeliParams,
}

_PARAM_FILES = {
    UavClass.QUADCOPTER: "quad.params",
    UavClass.FIXED_WING: "fixed_wing.params",
    UavClass.HELICOPTER: "heli.params",
}


def parse_params(text: str, cls):
    """Parse flat ``name = value`` text into a parameter dataclass.

    Blank lines and '#' comments are allowed; unknown or missing keys and
    non-numeric values raise ParameterFileError.
    """
    known = {f.name for f in fields(cls)}
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterFileError(f"line {lineno}: expected 'name = value'")
        name, _, value = line.partition("=")
        name = name.strip()
        if name not in known:
            raise ParameterFileError(f"line {lineno}: unknown key {name!r}")
        if name in values:
            raise ParameterFileError(f"line {lineno}: duplicate key {name!r}")
        try:
            values[name] = float(value.strip())
        except ValueError as exc:
            raise ParameterFileError(f"line {lineno}: bad value for {name!r}") from exc
    missing = known - values.keys()
    if missing:
        raise ParameterFileError(f"missing keys: {sorted(missing)}")
    return cls(**values)


def _params_text(uav_class: UavClass) -> str:
    name = _PARAM_FILES[UavClass(uav_class)]
    return resources.files("uavclass.params").joinpath(name).read_text()


def default_params(uav_class: UavClass):
    """Load the packaged parameter file for a vehicle class."""
    return parse_params(_params_text(uav_class), PARAMS_TYPE[UavClass(uav_class)])


def params_file_hash(uav_class: UavClass) -> str:
    """SHA-256 of the packaged parameter file (recorded in dataset manifests)."""
    return hashlib.sha256(_params_text(uav_class).encode()).hexdigest()


def _check_state(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != 12:
        raise ValueError(f"state must have 12 entries, got shape {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError("non-finite state")
    return state


# ---------------------------------------------------------------------------
# Rotorcraft (quadcopter and helicopter share the rigid-body form)
# ---------------------------------------------------------------------------

def quad_mixer(motor_speeds: np.ndarray, p: QuadParams) -> np.ndarray:
    """Map motor speeds to (total thrust, roll, pitch, yaw torque).

    u1 = sum of per-rotor thrusts k_t * w_i^2
    u2 = l * (T4 - T2), u3 = l * (T1 - T3)
    u4 = tau1 - tau2 + tau3 - tau4 with tau_i = k_d * w_i^2
    """
    w = np.asarray(motor_speeds, dtype=float)
    if w.shape[-1] != 4:
        raise ValueError("expected 4 motor speeds")
    t1, t2, t3, t4 = (p.k_t * w[..., i] ** 2 for i in range(4))
    u1 = t1 + t2 + t3 + t4
    u2 = p.l_arm * (t4 - t2)
    u3 = p.l_arm * (t1 - t3)
    u4 = (p.k_d / p.k_t) * (t1 - t2 + t3 - t4)
    return np.stack([u1, u2, u3, u4], axis=-1)


def _rotorcraft_derivative(state, u, m, g, ixx, iyy, izz, k_drag_v, k_drag_w):
    """Rigid-body derivative for thrust-and-torque vehicles, z up.

    u = (u1, u2, u3, u4): collective thrust along body z plus body torques.
    """
    vx, vy, vz = state[..., 3], state[..., 4], state[..., 5]
    phi, theta, psi = state[..., 6], state[..., 7], state[..., 8]
    p_, q_, r_ = state[..., 9], state[..., 10], state[..., 11]
    u1, u2, u3, u4 = u[..., 0], u[..., 1], u[..., 2], u[..., 3]

    rows = rotation_entries(phi, theta, psi)
    # Thrust is (0, 0, u1) in the body frame; only R's third column matters.
    acc_x = (rows[0][2] * u1 - k_drag_v * vx) / m
    acc_y = (rows[1][2] * u1 - k_drag_v * vy) / m
    acc_z = (rows[2][2] * u1 - k_drag_v * vz) / m - g

    phi_dot, theta_dot, psi_dot = euler_rates(phi, theta, p_, q_, r_)

    # I^-1 (tau - k_drag_w * omega - omega x (I omega)) with diagonal inertia
    p_dot = (u2 - k_drag_w * p_ - q_ * r_ * (izz - iyy)) / ixx
    q_dot = (u3 - k_drag_w * q_ - r_ * p_ * (ixx - izz)) / iyy
    r_dot = (u4 - k_drag_w * r_ - p_ * q_ * (iyy - ixx)) / izz

    return np.stack(
        [vx, vy, vz, acc_x, acc_y, acc_z,
         phi_dot, theta_dot, psi_dot, p_dot, q_dot, r_dot],
        axis=-1,
    )


def quad_derivative(state: np.ndarray, motor_speeds: np.ndarray,
                    p: QuadParams) -> np.ndarray:
    """State derivative of the quadcopter under the given motor speeds."""
    state = _check_state(state)
    u = quad_mixer(motor_speeds, p)
    return _rotorcraft_derivative(
        state, u, p.m, p.g, p.ixx, p.iyy, p.izz, p.k_drag_v, p.k_drag_w
    )


def heli_control_map(raw: np.ndarray, p: HeliParams) -> np.ndarray:
    """Map (T_main, T_rear, cyclic roll, cyclic pitch) to thrust and torques.

    u1 = T_m, u2 = T_m * l * sin(d_phi), u3 = T_m * l * sin(d_theta),
    u4 = T_r * d.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != 4:
        raise ValueError("expected 4 control entries")
    tm, tr = raw[..., 0], raw[..., 1]
    if np.any(tm < 0.0) or np.any(tr < 0.0):
        raise ValueError("rotor thrusts must be non-negative")
    dphi, dtheta = raw[..., 2], raw[..., 3]
    return np.stack(
        [tm, tm * p.l_arm * np.sin(dphi), tm * p.l_arm * np.sin(dtheta),
         tr * p.d_tail],
        axis=-1,
    )


def heli_derivative(state: np.ndarray, raw: np.ndarray,
                    p: HeliParams) -> np.ndarray:
    """State derivative of the helicopter; same rigid-body form as the quad."""
    state = _check_state(state)
    u = heli_control_map(raw, p)
    return _rotorcraft_derivative(
        state, u, p.m, p.g, p.ixx, p.iyy, p.izz, p.k_drag_v, p.k_drag_w
    )


# ---------------------------------------------------------------------------
# Fixed wing
# ---------------------------------------------------------------------------

# Below this airspeed the incidence angles are defined as zero and all
# aerodynamic forces/moments vanish with V_a^2.
_V_EPS = 1e-9


def fw_incidence(u, v, w):
    """(airspeed, angle of attack, sideslip) from body velocity components."""
    va = np.sqrt(u * u + v * v + w * w)
    small = va < _V_EPS
    alpha = np.where(small, 0.0, np.arctan2(w, u))
    # asin argument is clipped only against rounding; |v| <= va always holds
    beta = np.where(small, 0.0, np.arcsin(np.clip(v / np.where(small, 1.0, va), -1.0, 1.0)))
    return va, alpha, beta


def fw_coefficients(alpha, beta, da, de, dr, p: FixedWingParams):
    """Aerodynamic coefficients (C_L, C_D, C_y, C_l, C_m, C_n)."""
    c_lift = p.CL0 + p.CL_alpha * alpha + p.CL_de * de
    c_drag = p.CD0 + p.CD_k * c_lift ** 2 + p.CD_de * de ** 2
    c_side = p.Cy_beta * beta + p.Cy_dr * dr
    c_roll = p.Cl_beta * beta + p.Cl_da * da
    c_pitch = p.Cm0 + p.Cm_alpha * alpha + p.Cm_de * de
    c_yaw = p.Cn_beta * beta + p.Cn_dr * dr
    return c_lift, c_drag, c_side, c_roll, c_pitch, c_yaw


def fw_prop_thrust(throttle, p: FixedWingParams):
    """Propeller thrust rho * D^4 / (4 pi^2) * (dt * omega_in)^2 * C_t."""
    omega_prop = throttle * p.omega_in
    return p.rho * p.D ** 4 / (4.0 * np.pi ** 2) * omega_prop ** 2 * p.C_t


def fw_forces_moments(state: np.ndarray, controls: np.ndarray,
                      p: FixedWingParams):
    """Total body-frame force (Fx, Fy, Fz) and moments (tx, ty, tz)."""
    u, v, w = state[..., 0], state[..., 1], state[..., 2]
    phi, theta = state[..., 6], state[..., 7]
    dt_, da, de, dr = (controls[..., i] for i in range(4))

    va, alpha, beta = fw_incidence(u, v, w)
    c_lift, c_drag, c_side, c_roll, c_pitch, c_yaw = fw_coefficients(
        alpha, beta, da, de, dr, p
    )
    qbar = 0.5 * p.rho * va ** 2 * p.S
    f_lift = qbar * c_lift
    f_drag = qbar * c_drag

    ca, sa = np.cos(alpha), np.sin(alpha)
    fx_aero = ca * (-f_drag) - sa * (-f_lift)
    fz_aero = sa * (-f_drag) + ca * (-f_lift)
    fy_aero = qbar * c_side

    mg = p.m * p.g
    fx_g = -np.sin(theta) * mg
    fy_g = np.cos(theta) * np.sin(phi) * mg
    fz_g = np.cos(theta) * np.cos(phi) * mg

    fx = fx_aero + fw_prop_thrust(dt_, p) + fx_g
    fy = fy_aero + fy_g
    fz = fz_aero + fz_g

    tx = qbar * p.b * c_roll
    ty = qbar * p.c_chord * c_pitch
    tz = qbar * p.b * c_yaw
    return (fx, fy, fz), (tx, ty, tz)


def fw_derivative(state: np.ndarray, controls: np.ndarray,
                  p: FixedWingParams) -> np.ndarray:
    """State derivative of the fixed-wing vehicle.

    State layout: [u, v, w, p, q, r, phi, theta, psi, x, y, z]; returns
    [body acceleration, angular acceleration, Euler rates, inertial
    position rate R(phi, theta, psi) @ (u, v, w)].
    """
    state = _check_state(state)
    controls = np.asarray(controls, dtype=float)
    u, v, w = state[..., 0], state[..., 1], state[..., 2]
    p_, q_, r_ = state[..., 3], state[..., 4], state[..., 5]
    phi, theta, psi = state[..., 6], state[..., 7], state[..., 8]

    (fx, fy, fz), (tx, ty, tz) = fw_forces_moments(state, controls, p)

    u_dot = fx / p.m - q_ * w + r_ * v
    v_dot = fy / p.m - r_ * u + p_ * w
    w_dot = fz / p.m - p_ * v + q_ * u

    p_dot = (tx - q_ * r_ * (p.izz - p.iyy)) / p.ixx
    q_dot = (ty - r_ * p_ * (p.ixx - p.izz)) / p.iyy
    r_dot = (tz - p_ * q_ * (p.iyy - p.ixx)) / p.izz

    phi_dot, theta_dot, psi_dot = euler_rates(phi, theta, p_, q_, r_)

    rows = rotation_entries(phi, theta, psi)
    x_dot = rows[0][0] * u + rows[0][1] * v + rows[0][2] * w
    y_dot = rows[1][0] * u + rows[1][1] * v + rows[1][2] * w
    z_dot = rows[2][0] * u + rows[2][1] * v + rows[2][2] * w

    return np.stack(
        [u_dot, v_dot, w_dot, p_dot, q_dot, r_dot,
         phi_dot, theta_dot, psi_dot, x_dot, y_dot, z_dot],
        axis=-1,
    )


def derivative_fn(uav_class: UavClass, params):
    """Return f(state, controls) for the given class and parameter set."""
    uav_class = UavClass(uav_class)
    if uav_class is UavClass.QUADCOPTER:
        return lambda s, c: quad_derivative(s, c, params)
    if uav_class is UavClass.FIXED_WING:
        return lambda s, c: fw_derivative(s, c, params)
    return lambda s, c: heli_derivative(s, c, params)
