"""Open-loop flight scenarios: trims, control laws, trajectory simulation.

Each scenario kind defines a deterministic control law u(t). The law's
amplitude/frequency/phase constants are drawn once from the scenario seed, so
u(t) is a pure function of (class, kind, seed, t). Maneuver kinds superpose a
smooth sinusoidal offset on the relevant control channel on top of the trim;
Disturbed adds a three-component multi-sine to every channel; Failure zeroes
one seeded-chosen channel for t >= a seeded cutoff time.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .dynamics import rk4_step
from .errors import (
    GimbalSingularityError,
    IntegrationDivergedError,
    ScenarioInfeasibleError,
)
from .vehicles import (
    FixedWingParams,
    HeliParams,
    QuadParams,
    UavClass,
    derivative_fn,
)

# Fixed-wing cruise airspeed used for the trim and initial states, m/s.
CRUISE_SPEED = 25.0

# Reject a trajectory once any state magnitude exceeds this bound.
STATE_BOUND = 1e6

# How many consecutive rejected seeds before a scenario is declared infeasible.
MAX_REJECTS = 100


class ScenarioKind(Enum):
    HOVER = "hover"
    CRUISE = "cruise"
    CLIMB = "climb"
    ROLL = "roll"
    PITCH = "pitch"
    YAW = "yaw"
    DISTURBED = "disturbed"
    FAILURE = "failure"


# Hover is meaningless for a fixed wing and is replaced by Cruise there.
VALID_KINDS = {
    UavClass.QUADCOPTER: (
        ScenarioKind.HOVER, ScenarioKind.CLIMB, ScenarioKind.ROLL,
        ScenarioKind.PITCH, ScenarioKind.YAW, ScenarioKind.DISTURBED,
        ScenarioKind.FAILURE,
    ),
    UavClass.FIXED_WING: (
        ScenarioKind.CRUISE, ScenarioKind.CLIMB, ScenarioKind.ROLL,
        ScenarioKind.PITCH, ScenarioKind.YAW, ScenarioKind.DISTURBED,
        ScenarioKind.FAILURE,
    ),
    UavClass.HELICOPTER: (
        ScenarioKind.HOVER, ScenarioKind.CLIMB, ScenarioKind.ROLL,
        ScenarioKind.PITCH, ScenarioKind.YAW, ScenarioKind.DISTURBED,
        ScenarioKind.FAILURE,
    ),
}


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    seed: int


@dataclass
class Trajectory:
    """A simulated flight: states, matching true derivatives, and controls.

    states/derivs have shape (T+1, 12), controls (T+1, 4). derivs[t] is the
    class derivative function evaluated at (states[t], controls[t]).
    """

    class_id: int
    scenario: Scenario
    dt: float
    states: np.ndarray
    derivs: np.ndarray
    controls: np.ndarray

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1


# ---------------------------------------------------------------------------
# Trims
# ---------------------------------------------------------------------------

def quad_hover_speed(p: QuadParams) -> float:
    """Motor speed at which four equal rotors exactly cancel gravity."""
    return float(np.sqrt(p.m * p.g / (4.0 * p.k_t)))


def quad_trim(p: QuadParams) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(12), np.full(4, quad_hover_speed(p))


def heli_trim(p: HeliParams) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(12), np.array([p.m * p.g, 0.0, 0.0, 0.0])


@lru_cache(maxsize=64)
def fw_cruise_trim(p: FixedWingParams, v_air: float = CRUISE_SPEED):
    """Steady level cruise: solve for angle of attack, elevator, throttle.

    With pitch equal to the angle of attack the inertial climb rate is zero,
    the pitch moment fixes the elevator, and the force balance reduces to
    lift + tan(alpha) * drag = weight (vertical) and thrust = drag/cos(alpha)
    (horizontal). The vertical balance is solved for alpha by bisection.
    """
    qbar = 0.5 * p.rho * v_air ** 2 * p.S
    weight = p.m * p.g

    def elevator(alpha: float) -> float:
        return -(p.Cm0 + p.Cm_alpha * alpha) / p.Cm_de

    def residual(alpha: float) -> float:
        de = elevator(alpha)
        c_lift = p.CL0 + p.CL_alpha * alpha + p.CL_de * de
        c_drag = p.CD0 + p.CD_k * c_lift ** 2 + p.CD_de * de ** 2
        return qbar * (c_lift + np.tan(alpha) * c_drag) - weight

    lo, hi = -0.2, 0.5
    if residual(lo) > 0.0 or residual(hi) < 0.0:
        raise ValueError("no cruise trim in the searchable incidence range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if residual(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    alpha = 0.5 * (lo + hi)

    de = elevator(alpha)
    c_lift = p.CL0 + p.CL_alpha * alpha + p.CL_de * de
    c_drag = p.CD0 + p.CD_k * c_lift ** 2 + p.CD_de * de ** 2
    thrust = qbar * c_drag / np.cos(alpha)
    omega_prop = np.sqrt(thrust * 4.0 * np.pi ** 2 / (p.rho * p.D ** 4 * p.C_t))
    throttle = float(omega_prop / p.omega_in)
    if not 0.0 <= throttle <= 1.0:
        raise ValueError(f"cruise trim needs throttle {throttle:.3f} outside [0, 1]")

    state = np.zeros(12)
    state[0] = v_air * np.cos(alpha)
    state[2] = v_air * np.sin(alpha)
    state[7] = alpha
    controls = np.array([throttle, 0.0, de, 0.0])
    return state, controls


def trim(uav_class: UavClass, params) -> tuple[np.ndarray, np.ndarray]:
    """Trim state and controls for a class (hover, hover, cruise)."""
    uav_class = UavClass(uav_class)
    if uav_class is UavClass.QUADCOPTER:
        return quad_trim(params)
    if uav_class is UavClass.FIXED_WING:
        state, controls = fw_cruise_trim(params)
        return state.copy(), controls.copy()
    return heli_trim(params)


# ---------------------------------------------------------------------------
# Control laws
# ---------------------------------------------------------------------------

# Failure cutoff windows, seconds. The quadcopter window sits late in the
# 10 s horizon: a longer motor-out tail tumbles through the pitch singularity
# and would reject nearly every seed.
FAILURE_CUTOFF = {
    UavClass.QUADCOPTER: (9.2, 9.8),
    UavClass.FIXED_WING: (6.0, 9.5),
    UavClass.HELICOPTER: (6.0, 9.5),
}

# Fixed-wing pitch maneuver: elevator A*sin(2*pi*f*t) replacing the trim
# deflection, throttle held at cruise trim.
FW_PITCH_AMPLITUDE = 0.05
FW_PITCH_FREQ = 0.25


def _sin(rng, lo_amp, hi_amp, lo_f=0.1, hi_f=0.4):
    """Draw (amplitude, frequency, phase) for one sinusoid."""
    return (
        rng.uniform(lo_amp, hi_amp),
        rng.uniform(lo_f, hi_f),
        rng.uniform(0.0, 2.0 * np.pi),
    )


def _multisine(rng, lo_amp, hi_amp, n=3, lo_f=0.1, hi_f=1.0):
    return [_sin(rng, lo_amp, hi_amp, lo_f, hi_f) for _ in range(n)]


def _eval_sin(term, t):
    amp, freq, phase = term
    return amp * np.sin(2.0 * np.pi * freq * t + phase)


def _eval_multisine(terms, t):
    out = 0.0
    for term in terms:
        out = out + _eval_sin(term, t)
    return out


@lru_cache(maxsize=16384)
def _law_constants(uav_class: UavClass, kind: ScenarioKind, seed: int, params):
    """Seed-derived constants of a scenario's control law."""
    rng = np.random.default_rng([seed, 0])
    k: dict = {}
    if kind in (ScenarioKind.HOVER, ScenarioKind.CRUISE):
        return k
    if kind is ScenarioKind.CLIMB:
        if uav_class is UavClass.FIXED_WING:
            k["bias"] = rng.uniform(0.10, 0.30)
            k["sin"] = _sin(rng, 0.05, 0.15, 0.1, 0.3)
        else:
            k["bias"] = rng.uniform(0.01, 0.04)
            k["sin"] = _sin(rng, 0.005, 0.02, 0.1, 0.3)
    elif kind is ScenarioKind.ROLL:
        amp, freq = {
            UavClass.QUADCOPTER: ((0.001, 0.005), (0.2, 0.5)),
            UavClass.FIXED_WING: ((0.0005, 0.002), (0.2, 0.5)),
            UavClass.HELICOPTER: ((0.003, 0.01), (0.4, 0.8)),
        }[uav_class]
        k["sin"] = _sin(rng, *amp, *freq)
    elif kind is ScenarioKind.PITCH:
        if uav_class is UavClass.FIXED_WING:
            k["sin"] = (FW_PITCH_AMPLITUDE, FW_PITCH_FREQ, 0.0)
        else:
            amp, freq = {
                UavClass.QUADCOPTER: ((0.001, 0.004), (0.2, 0.5)),
                UavClass.HELICOPTER: ((0.002, 0.008), (0.4, 0.8)),
            }[uav_class]
            k["sin"] = _sin(rng, *amp, *freq)
    elif kind is ScenarioKind.YAW:
        amp = {
            UavClass.QUADCOPTER: (0.01, 0.04),
            UavClass.FIXED_WING: (0.005, 0.02),
            UavClass.HELICOPTER: (0.02, 0.1),
        }[uav_class]
        k["sin"] = _sin(rng, *amp, 0.3, 0.6)
    elif kind is ScenarioKind.DISTURBED:
        if uav_class is UavClass.QUADCOPTER:
            k["motors"] = [_multisine(rng, 0.0005, 0.002) for _ in range(4)]
        elif uav_class is UavClass.FIXED_WING:
            k["throttle"] = _multisine(rng, 0.01, 0.04)
            k["surfaces"] = [_multisine(rng, 0.001, 0.004) for _ in range(3)]
        else:
            k["thrust"] = _multisine(rng, 0.005, 0.02)
            k["cyclic"] = [_multisine(rng, 0.001, 0.005) for _ in range(2)]
    elif kind is ScenarioKind.FAILURE:
        # zeroing an idle channel is a no-op, so pick among channels whose
        # trim command is nonzero (all four motors / throttle+elevator / main
        # rotor)
        _, trim_u = trim(uav_class, params)
        live = [i for i in range(4) if trim_u[i] != 0.0]
        k["channel"] = int(live[rng.integers(0, len(live))])
        k["cutoff"] = float(rng.uniform(*FAILURE_CUTOFF[uav_class]))
    return k


def failure_spec(uav_class: UavClass, scenario: Scenario, params) -> tuple[int, float]:
    """(zeroed channel index, cutoff time) of a Failure scenario."""
    if scenario.kind is not ScenarioKind.FAILURE:
        raise ValueError("not a failure scenario")
    k = _law_constants(UavClass(uav_class), scenario.kind, scenario.seed, params)
    return k["channel"], k["cutoff"]


def generate_controls(uav_class: UavClass, scenario: Scenario, t, params) -> np.ndarray:
    """Control vector at time t; broadcasts over an array of times.

    Deterministic in (scenario.seed, t). Raises ValueError when the scenario
    kind is not valid for the class.
    """
    uav_class = UavClass(uav_class)
    kind = scenario.kind
    if kind not in VALID_KINDS[uav_class]:
        raise ValueError(f"scenario {kind.value} invalid for {uav_class.name}")
    t = np.asarray(t, dtype=float)
    k = _law_constants(uav_class, kind, scenario.seed, params)
    _, trim_u = trim(uav_class, params)
    ones = np.ones_like(t)
    u = [trim_u[i] * ones for i in range(4)]

    if kind in (ScenarioKind.HOVER, ScenarioKind.CRUISE):
        pass
    elif kind is ScenarioKind.CLIMB:
        factor = 1.0 + k["bias"] + _eval_sin(k["sin"], t)
        if uav_class is UavClass.FIXED_WING:
            u[0] = trim_u[0] * factor
        else:
            # collective on all motors (quad) or on the main thrust (heli)
            chans = range(4) if uav_class is UavClass.QUADCOPTER else (0,)
            for i in chans:
                u[i] = trim_u[i] * factor
    elif kind is ScenarioKind.ROLL:
        s = _eval_sin(k["sin"], t)
        if uav_class is UavClass.QUADCOPTER:
            u[1] = trim_u[1] * (1.0 - s)
            u[3] = trim_u[3] * (1.0 + s)
        elif uav_class is UavClass.FIXED_WING:
            u[1] = trim_u[1] + s
        else:
            u[2] = trim_u[2] + s
    elif kind is ScenarioKind.PITCH:
        s = _eval_sin(k["sin"], t)
        if uav_class is UavClass.QUADCOPTER:
            u[0] = trim_u[0] * (1.0 + s)
            u[2] = trim_u[2] * (1.0 - s)
        elif uav_class is UavClass.FIXED_WING:
            u[2] = s  # elevator law is A*sin(2 pi f t), throttle at trim
        else:
            u[3] = trim_u[3] + s
    elif kind is ScenarioKind.YAW:
        s = _eval_sin(k["sin"], t)
        if uav_class is UavClass.QUADCOPTER:
            u[0] = trim_u[0] * (1.0 + s)
            u[2] = trim_u[2] * (1.0 + s)
            u[1] = trim_u[1] * (1.0 - s)
            u[3] = trim_u[3] * (1.0 - s)
        elif uav_class is UavClass.FIXED_WING:
            u[3] = trim_u[3] + s
        else:
            amp, freq, phase = k["sin"]
            # tail thrust must stay non-negative
            u[1] = 0.5 * amp * (1.0 + np.sin(2.0 * np.pi * freq * t + phase))
    elif kind is ScenarioKind.DISTURBED:
        if uav_class is UavClass.QUADCOPTER:
            for i in range(4):
                u[i] = trim_u[i] * (1.0 + _eval_multisine(k["motors"][i], t))
        elif uav_class is UavClass.FIXED_WING:
            u[0] = trim_u[0] * (1.0 + _eval_multisine(k["throttle"], t))
            for i, terms in zip((1, 2, 3), k["surfaces"]):
                u[i] = trim_u[i] + _eval_multisine(terms, t)
        else:
            u[0] = trim_u[0] * (1.0 + _eval_multisine(k["thrust"], t))
            for i, terms in zip((2, 3), k["cyclic"]):
                u[i] = trim_u[i] + _eval_multisine(terms, t)
    elif kind is ScenarioKind.FAILURE:
        u[k["channel"]] = np.where(t >= k["cutoff"], 0.0, u[k["channel"]])

    out = np.stack(u, axis=-1)
    if uav_class is UavClass.QUADCOPTER:
        out = np.maximum(out, 0.0)
    elif uav_class is UavClass.FIXED_WING:
        out[..., 0] = np.clip(out[..., 0], 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

# Initial-state spread around trim: position, velocity, attitude, body rates.
INIT_SIGMA_POS = 0.5
INIT_SIGMA_VEL = 0.02
INIT_SIGMA_ATT = 0.05
INIT_SIGMA_RATE = 0.02


def _initial_state(uav_class: UavClass, params, rng, scale: float) -> np.ndarray:
    state, _ = trim(uav_class, params)
    state = state.copy()
    pos = rng.normal(0.0, INIT_SIGMA_POS, 3) * scale
    vel = rng.normal(0.0, INIT_SIGMA_VEL, 3) * scale
    att = rng.normal(0.0, INIT_SIGMA_ATT, 3) * scale
    rate = rng.normal(0.0, INIT_SIGMA_RATE, 3) * scale
    if UavClass(uav_class) is UavClass.FIXED_WING:
        state[0:3] += vel
        state[3:6] += rate
        state[6:9] += att
        state[9:12] += pos
    else:
        state[0:3] += pos
        state[3:6] += vel
        state[6:9] += att
        state[9:12] += rate
    return state


def simulate_trajectory(
    uav_class: UavClass,
    params,
    scenario: Scenario,
    duration: float = 10.0,
    dt: float = 0.01,
    init_scale: float = 1.0,
) -> Trajectory:
    """Integrate one open-loop trajectory; T+1 states for T = duration/dt.

    Trajectories that hit the pitch singularity, produce non-finite values,
    or leave the sanity bound are rejected and regenerated with the next
    seed; more than MAX_REJECTS consecutive rejections raise
    ScenarioInfeasibleError.
    """
    uav_class = UavClass(uav_class)
    n_steps = duration / dt
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise ValueError("duration must be an integral number of dt steps")
    n = int(round(n_steps))
    f = derivative_fn(uav_class, params)
    times = np.arange(n + 1) * dt

    for attempt in range(MAX_REJECTS):
        sub = Scenario(scenario.kind, scenario.seed + attempt)
        controls = generate_controls(uav_class, sub, times, params)
        rng = np.random.default_rng([sub.seed, 1])
        state = _initial_state(uav_class, params, rng, init_scale)

        states = np.empty((n + 1, 12))
        derivs = np.empty((n + 1, 12))
        states[0] = state
        ok = True
        for i in range(n):
            try:
                k1 = f(states[i], controls[i])
                if not np.all(np.isfinite(k1)):
                    raise IntegrationDivergedError("non-finite derivative", stage=1)
                derivs[i] = k1
                nxt = rk4_step(f, states[i], controls[i], dt, k1=k1)
            except (GimbalSingularityError, IntegrationDivergedError):
                ok = False
                break
            if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > STATE_BOUND:
                ok = False
                break
            states[i + 1] = nxt
        if ok:
            try:
                derivs[n] = f(states[n], controls[n])
            except (GimbalSingularityError, IntegrationDivergedError):
                ok = False
        if ok and np.all(np.isfinite(derivs[n])):
            return Trajectory(
                class_id=int(uav_class),
                scenario=sub,
                dt=dt,
                states=states,
                derivs=derivs,
                controls=controls,
            )

    raise ScenarioInfeasibleError(
        f"{scenario.kind.value} for {uav_class.name}: "
        f"{MAX_REJECTS} consecutive seeds rejected"
    )
