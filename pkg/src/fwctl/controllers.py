"""Classical control loops: roll/pitch PID attitude control and airspeed PI.

Gains act on errors in radians (or m/s for airspeed) and produce normalized
commands. Integrators use conditional integration as anti-windup: the
integral is frozen whenever the output is saturated and the error would push
it further into saturation. The array helpers broadcast so planner rollouts
can carry a PI throttle loop per trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# roll PID / pitch PID (kp, ki, kd), aileron and elevator channels
ROLL_GAINS = (1.5, 0.1, 0.1)
PITCH_GAINS = (-2.0, -0.3, -0.1)
AIRSPEED_GAINS = (0.5, 0.1)


def _conditional_integrate(integral, error, raw_output, lo, hi, ki, dt):
    """Advance the integral except where it would deepen saturation."""
    push = ki * error
    allowed = ((raw_output < hi) & (raw_output > lo)) \
        | ((raw_output >= hi) & (push < 0.0)) \
        | ((raw_output <= lo) & (push > 0.0))
    return integral + np.where(allowed, error * dt, 0.0)


def pid_output_arrays(error, integral, prev_error, dt, kp, ki, kd, lo=-1.0, hi=1.0):
    """PID law on (possibly batched) errors.

    The integral enters with its pre-update value, so a first call with zero
    history is a pure P(+D) response. Returns (output, new_integral).
    """
    deriv = np.where(np.isnan(prev_error), 0.0, (error - prev_error) / dt)
    raw = kp * error + ki * integral + kd * deriv
    new_integral = _conditional_integrate(integral, error, raw, lo, hi, ki, dt)
    return np.clip(raw, lo, hi), new_integral


@dataclass
class PidState:
    """Gains plus integrator/derivative memory for one PID channel."""

    kp: float
    ki: float
    kd: float
    out_lo: float = -1.0
    out_hi: float = 1.0
    integral: float = 0.0
    prev_error: float = field(default=np.nan)

    def update(self, error: float, dt: float) -> float:
        out, self.integral = pid_output_arrays(
            np.float64(error), np.float64(self.integral), np.float64(self.prev_error),
            dt, self.kp, self.ki, self.kd, self.out_lo, self.out_hi)
        self.prev_error = float(error)
        return float(out)

    def reset(self):
        self.integral = 0.0
        self.prev_error = np.nan


class RollPitchPid:
    """Attitude PID pair mapping (e_phi, e_theta) to aileron/elevator commands."""

    def __init__(self, roll_gains=ROLL_GAINS, pitch_gains=PITCH_GAINS):
        self.roll = PidState(*roll_gains)
        self.pitch = PidState(*pitch_gains)

    def update(self, e_phi: float, e_theta: float, dt: float) -> np.ndarray:
        return np.array([self.roll.update(e_phi, dt), self.pitch.update(e_theta, dt)])

    def reset(self):
        self.roll.reset()
        self.pitch.reset()


def pid_attitude(e_phi: float, e_theta: float, dt: float,
                 controller: RollPitchPid) -> np.ndarray:
    """Normalized (aileron, elevator) commands from attitude errors."""
    return controller.update(e_phi, e_theta, dt)


def pd_attitude_arrays(e_phi, e_theta, p, q,
                       roll_gains=ROLL_GAINS, pitch_gains=PITCH_GAINS):
    """Stateless PD form of the attitude loops for batched rollouts.

    The error derivative is approximated by the negated body rate, so no
    per-trajectory memory is required.
    """
    da = np.clip(roll_gains[0] * e_phi + roll_gains[2] * (-p), -1.0, 1.0)
    de = np.clip(pitch_gains[0] * e_theta + pitch_gains[2] * (-q), -1.0, 1.0)
    return np.stack([da, de], axis=-1)


def pid_attitude_arrays(e_phi, e_theta, p, q, ie_phi, ie_theta,
                        roll_gains=ROLL_GAINS, pitch_gains=PITCH_GAINS):
    """Memoryless full-PID attitude law for batched rollouts.

    Uses externally tracked error integrals (they are part of the rollout
    state) and the negated body rates as error derivatives.
    """
    da = np.clip(roll_gains[0] * e_phi + roll_gains[1] * ie_phi
                 + roll_gains[2] * (-p), -1.0, 1.0)
    de = np.clip(pitch_gains[0] * e_theta + pitch_gains[1] * ie_theta
                 + pitch_gains[2] * (-q), -1.0, 1.0)
    return np.stack([da, de], axis=-1)


def pi_airspeed_arrays(va, va_ref, integral, dt,
                       kp=AIRSPEED_GAINS[0], ki=AIRSPEED_GAINS[1]):
    """Airspeed PI on (possibly batched) states. Returns (delta_t, new_integral)."""
    error = va_ref - va
    raw = kp * error + ki * integral
    new_integral = _conditional_integrate(integral, error, raw, 0.0, 1.0, ki, dt)
    return np.clip(raw, 0.0, 1.0), new_integral


@dataclass
class PiAirspeed:
    """Stateful airspeed PI loop driving the throttle command."""

    kp: float = AIRSPEED_GAINS[0]
    ki: float = AIRSPEED_GAINS[1]
    integral: float = 0.0

    def update(self, va: float, va_ref: float, dt: float) -> float:
        out, self.integral = pi_airspeed_arrays(
            np.float64(va), np.float64(va_ref), np.float64(self.integral), dt,
            self.kp, self.ki)
        return float(out)

    def reset(self):
        self.integral = 0.0


def pi_airspeed(va: float, va_ref: float, dt: float, state: PiAirspeed) -> float:
    """Throttle command in [0, 1] tracking the reference airspeed."""
    return state.update(va, va_ref, dt)
