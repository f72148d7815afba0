"""Servo and throttle dynamics between commanded and actual positions.

Control surfaces are rate-limited, saturated second-order servos; the
throttle is a unity-gain first-order lag integrated exactly. Normalized
commands in [-1, 1] map linearly onto +/-30 degrees of deflection. The array
functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAX_DEFLECTION_RAD = np.radians(30.0)
MAX_RATE_RAD_S = np.radians(200.0)


@dataclass
class ServoParams:
    omega0: float = 100.0          # natural frequency, rad/s
    zeta: float = 1.0 / np.sqrt(2.0)
    max_deflection: float = MAX_DEFLECTION_RAD
    max_rate: float = MAX_RATE_RAD_S


@dataclass
class ThrottleParams:
    time_constant: float = 0.2     # seconds, unity DC gain


@dataclass
class ServoState:
    position: float = 0.0          # rad
    velocity: float = 0.0          # rad/s


@dataclass
class ThrottleState:
    level: float = 0.0             # fraction of full throttle


def command_to_deflection(command, params: ServoParams = ServoParams()):
    """Normalized [-1, 1] command to a physical deflection target in rad."""
    return np.clip(command, -1.0, 1.0) * params.max_deflection


def servo_step_arrays(position, velocity, command, dt: float,
                      params: ServoParams = ServoParams()):
    """One RK4 step of the servo ODE with post-step rate/position clamps."""
    target = command_to_deflection(command, params)
    w0, zeta = params.omega0, params.zeta

    def accel(x, v):
        return w0 * w0 * (target - x) - 2.0 * zeta * w0 * v

    k1v = accel(position, velocity)
    k1x = velocity
    k2v = accel(position + 0.5 * dt * k1x, velocity + 0.5 * dt * k1v)
    k2x = velocity + 0.5 * dt * k1v
    k3v = accel(position + 0.5 * dt * k2x, velocity + 0.5 * dt * k2v)
    k3x = velocity + 0.5 * dt * k2v
    k4v = accel(position + dt * k3x, velocity + dt * k3v)
    k4x = velocity + dt * k3v

    new_pos = position + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    new_vel = velocity + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    new_vel = np.clip(new_vel, -params.max_rate, params.max_rate)
    # honor the rate limit in the realized travel as well
    new_pos = np.clip(new_pos, position - params.max_rate * dt,
                      position + params.max_rate * dt)
    new_pos = np.clip(new_pos, -params.max_deflection, params.max_deflection)
    return new_pos, new_vel


def step_servo(state: ServoState, command: float, dt: float,
               params: ServoParams = ServoParams()) -> ServoState:
    """Advance one servo by dt toward a normalized command."""
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    pos, vel = servo_step_arrays(np.asarray(state.position, float),
                                 np.asarray(state.velocity, float),
                                 command, dt, params)
    return ServoState(position=float(pos), velocity=float(vel))


def throttle_step_arrays(level, command, dt: float,
                         params: ThrottleParams = ThrottleParams()):
    """Exact discretization of the first-order throttle lag."""
    cmd = np.clip(command, 0.0, 1.0)
    decay = np.exp(-dt / params.time_constant)
    return cmd + (level - cmd) * decay


def step_throttle(state: ThrottleState, command: float, dt: float,
                  params: ThrottleParams = ThrottleParams()) -> ThrottleState:
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    return ThrottleState(level=float(throttle_step_arrays(state.level, command, dt, params)))
