"""Rigid-body 6-DOF fixed-wing dynamics.

State propagation integrates quaternion kinematics and the Newton-Euler
equations with coefficient-based aerodynamic forces/moments and a linear
throttle-to-thrust propulsion model. Every array function broadcasts over
leading batch dimensions using explicit component formulas, so batched
planner rollouts and the single-instance simulator follow the same
floating-point path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import config as cfg
from .errors import ConfigError, DivergenceError, InvalidStateError
from .frames import (
    quat_derivative,
    quat_normalize,
    quat_to_euler,
    rotate_body_to_ned,
    rotate_ned_to_body,
    wind_to_body,
)

MAX_DEFLECTION_RAD = np.radians(30.0)

# re-exported here because quaternion kinematics is part of the dynamics API
quat_kinematics = quat_derivative


def body_to_inertial_velocity(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """NED velocity of the vehicle given attitude q and body velocity v."""
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise InvalidStateError("non-finite attitude or velocity")
    return rotate_body_to_ned(q, v)


@dataclass
class AeroModel:
    """Airframe constants and aerodynamic coefficient polynomials."""

    mass: float
    inertia: np.ndarray
    S: float
    b: float
    c: float
    thrust_gain: float
    rho: float = 1.225
    gravity: float = 9.80665
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.inertia.shape != (3, 3):
            raise ConfigError("inertia must be a 3x3 matrix")
        if not np.allclose(self.inertia, self.inertia.T):
            raise ConfigError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ConfigError("inertia must be positive definite")
        for name, value in (("mass", self.mass), ("S", self.S), ("b", self.b),
                            ("c", self.c), ("rho", self.rho)):
            if value <= 0.0:
                raise ConfigError(f"{name} must be positive")
        self.inertia_inv = np.linalg.inv(self.inertia)
        # term-weight matrix: rows follow COEFFICIENT_TERMS, columns COEFFICIENT_NAMES
        tw = np.zeros((len(cfg.COEFFICIENT_TERMS), len(cfg.COEFFICIENT_NAMES)))
        for j, cname in enumerate(cfg.COEFFICIENT_NAMES):
            for term, value in self.coefficients.get(cname, []):
                tw[cfg.COEFFICIENT_TERMS.index(term), j] += value
        self.term_weights = tw

    @classmethod
    def from_dict(cls, d: dict) -> "AeroModel":
        ixz = d["ixz"]
        inertia = np.array([[d["ixx"], 0.0, -ixz],
                            [0.0, d["iyy"], 0.0],
                            [-ixz, 0.0, d["izz"]]])
        return cls(mass=d["mass"], inertia=inertia, S=d["S"], b=d["b"], c=d["c"],
                   thrust_gain=d["thrust_gain"], rho=d["rho"], gravity=d["gravity"],
                   coefficients=d["coefficients"])

    @classmethod
    def load(cls, source: str) -> "AeroModel":
        """Load from a builtin name ('x8', 'linear_test') or a file path."""
        return cls.from_dict(cfg.load_airframe_dict(source))

    @classmethod
    def x8(cls) -> "AeroModel":
        return cls.load("x8")

    @classmethod
    def linear_test(cls) -> "AeroModel":
        return cls.load("linear_test")


@dataclass
class RigidBodyState:
    """Position (NED, m), attitude quaternion, body velocity and rates."""

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)

    def validate(self):
        for name, arr in (("p", self.p), ("q", self.q), ("v", self.v), ("omega", self.omega)):
            if not np.all(np.isfinite(arr)):
                raise InvalidStateError(f"non-finite {name}")
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-6:
            raise InvalidStateError("quaternion norm deviates from 1")

    def euler(self):
        return quat_to_euler(self.q)


@dataclass
class AirState:
    """Velocity and rotation relative to the surrounding air."""

    v_r: np.ndarray
    omega_r: np.ndarray
    Va: float
    alpha: float
    beta: float
    degenerate: bool = False


@dataclass
class SurfaceDeflections:
    """Physical control surface positions: aileron/elevator rad, throttle [0,1]."""

    delta_a: float
    delta_e: float
    delta_t: float

    def validate(self):
        if max(abs(self.delta_a), abs(self.delta_e)) > MAX_DEFLECTION_RAD + 1e-9:
            raise InvalidStateError("surface deflection beyond saturation limit")
        if not 0.0 <= self.delta_t <= 1.0:
            raise InvalidStateError("throttle outside [0, 1]")


def relative_air_arrays(v, omega, q, wind_ned, turb_body, turb_rates):
    """Batched relative-air quantities: (v_r, omega_r, Va, alpha, beta, degenerate)."""
    v_r = v - (rotate_ned_to_body(q, wind_ned) + turb_body)
    omega_r = omega - turb_rates
    Va = np.sqrt(np.sum(v_r * v_r, axis=-1))
    ok = Va > 1e-9
    alpha = np.arctan2(v_r[..., 2], v_r[..., 0])
    beta = np.where(ok, np.arcsin(np.clip(v_r[..., 1] / np.where(ok, Va, 1.0), -1.0, 1.0)), 0.0)
    alpha = np.where(ok, alpha, 0.0)
    return v_r, omega_r, Va, alpha, beta, ~ok


def air_state(v: np.ndarray, omega: np.ndarray, q: np.ndarray, wind) -> AirState:
    """Relative-air state for one vehicle given a WindSample."""
    v_r, omega_r, Va, alpha, beta, degen = relative_air_arrays(
        np.asarray(v, float), np.asarray(omega, float), np.asarray(q, float),
        wind.ned_total(), wind.turb_body, wind.turb_rates_body)
    return AirState(v_r=v_r, omega_r=omega_r, Va=float(Va), alpha=float(alpha),
                    beta=float(beta), degenerate=bool(degen))


def _coefficients(model: AeroModel, Va, alpha, beta, omega_r, delta_a, delta_e):
    """Evaluate the six aero coefficients; returns an (..., 6) array."""
    safe_va = np.where(Va > 1e-9, Va, 1.0)
    rate_ok = Va > 1e-9
    p_hat = np.where(rate_ok, omega_r[..., 0] * model.b / (2.0 * safe_va), 0.0)
    q_hat = np.where(rate_ok, omega_r[..., 1] * model.c / (2.0 * safe_va), 0.0)
    r_hat = np.where(rate_ok, omega_r[..., 2] * model.b / (2.0 * safe_va), 0.0)
    terms = (np.ones_like(alpha), alpha, alpha * alpha, beta, p_hat, q_hat, r_hat,
             delta_a, delta_e)
    out = 0.0
    # fixed-order accumulation keeps batched and scalar paths bit-identical
    for t_val, weights in zip(terms, model.term_weights):
        out = out + t_val[..., None] * weights
    return out


def aero_forces_moments(air: AirState, surf: SurfaceDeflections, model: AeroModel):
    """Aerodynamic force and moment in the body frame, in N and N*m."""
    return aero_forces_moments_arrays(air.Va, air.alpha, air.beta, air.omega_r,
                                      surf.delta_a, surf.delta_e, model)


def aero_forces_moments_arrays(Va, alpha, beta, omega_r, delta_a, delta_e, model: AeroModel):
    Va = np.asarray(Va, float)
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    delta_a = np.asarray(delta_a, float)
    delta_e = np.asarray(delta_e, float)
    coeffs = _coefficients(model, Va, alpha, beta, omega_r, delta_a, delta_e)
    qbar_s = 0.5 * model.rho * Va * Va * model.S
    drag = qbar_s * coeffs[..., 0]
    side = qbar_s * coeffs[..., 1]
    lift = qbar_s * coeffs[..., 2]
    force = wind_to_body(alpha, beta, np.stack([-drag, side, -lift], axis=-1))
    moment = np.stack([
        qbar_s * model.b * coeffs[..., 3],
        qbar_s * model.c * coeffs[..., 4],
        qbar_s * model.b * coeffs[..., 5],
    ], axis=-1)
    return force, moment


def _mat3_apply(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply a fixed 3x3 matrix to (..., 3) vectors with explicit sums."""
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
        m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
        m[2, 0] * x + m[2, 1] * y + m[2, 2] * z,
    ], axis=-1)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def dynamics_derivatives(pos, q, v, omega, delta_a, delta_e, delta_t,
                         wind_ned, turb_body, turb_rates, model: AeroModel):
    """Time derivatives (dpos, dq, dv, domega) of the rigid-body state."""
    _, omega_r, Va, alpha, beta, _ = relative_air_arrays(
        v, omega, q, wind_ned, turb_body, turb_rates)
    f_aero, m_aero = aero_forces_moments_arrays(Va, alpha, beta, omega_r,
                                                delta_a, delta_e, model)
    thrust = model.thrust_gain * np.asarray(delta_t, float)
    f_prop = np.stack([thrust, np.zeros_like(thrust), np.zeros_like(thrust)], axis=-1)
    g_ned = np.zeros_like(pos)
    g_ned[..., 2] = model.gravity
    grav_body = rotate_ned_to_body(q, g_ned)

    dpos = rotate_body_to_ned(q, v)
    dq = quat_derivative(q, omega)
    dv = grav_body + (f_prop + f_aero) / model.mass - _cross(omega, v)
    domega = _mat3_apply(model.inertia_inv,
                         m_aero - _cross(omega, _mat3_apply(model.inertia, omega)))
    return dpos, dq, dv, domega


def rk4_step_arrays(pos, q, v, omega, delta_a, delta_e, delta_t,
                    wind_ned, turb_body, turb_rates, model: AeroModel, dt: float):
    """One fixed-step RK4 integration of the rigid-body state.

    Surfaces and wind are held constant over the step; the quaternion is
    renormalized afterwards.
    """
    def deriv(p_, q_, v_, w_):
        return dynamics_derivatives(p_, q_, v_, w_, delta_a, delta_e, delta_t,
                                    wind_ned, turb_body, turb_rates, model)

    k1 = deriv(pos, q, v, omega)
    k2 = deriv(*(y + 0.5 * dt * k for y, k in zip((pos, q, v, omega), k1)))
    k3 = deriv(*(y + 0.5 * dt * k for y, k in zip((pos, q, v, omega), k2)))
    k4 = deriv(*(y + dt * k for y, k in zip((pos, q, v, omega), k3)))
    out = [y + (dt / 6.0) * (a + 2.0 * b_ + 2.0 * c_ + d_)
           for y, a, b_, c_, d_ in zip((pos, q, v, omega), k1, k2, k3, k4)]
    out[1] = quat_normalize(out[1])
    return tuple(out)


def step_dynamics(state: RigidBodyState, surf: SurfaceDeflections, wind,
                  model: AeroModel, dt: float) -> RigidBodyState:
    """Advance a RigidBodyState by dt under the given surfaces and wind."""
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    state.validate()
    pos, q, v, omega = rk4_step_arrays(
        state.p, state.q, state.v, state.omega,
        surf.delta_a, surf.delta_e, surf.delta_t,
        wind.ned_total(), wind.turb_body, wind.turb_rates_body, model, dt)
    new = RigidBodyState(p=pos, q=q, v=v, omega=omega)
    if not all(np.all(np.isfinite(a)) for a in (pos, q, v, omega)):
        raise DivergenceError("state diverged during integration", last_valid_state=state)
    return new
