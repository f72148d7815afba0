"""Wind disturbances: steady wind, Dryden turbulence, and discrete gusts.

The turbulence realization follows the MIL-F-8785C low-altitude Dryden form:
unit-PSD white noise shaped by first/second-order filters whose intensities
scale with W20, the wind speed at 20 ft. Severity names map onto calibrated
(steady, W20, gust) magnitude triples; gusts are deterministic events with
cosine startup/end ramps.

All filter states broadcast over an optional leading batch dimension so large
Monte-Carlo checks stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

FT_PER_M = 3.28084

# severity -> (steady wind m/s, turbulence W20 m/s, gust peak m/s)
SEVERITY_TABLE = {
    "off": (0.0, 0.0, 0.0),
    "light": (7.0, 7.6, 7.0),
    "moderate": (15.0, 15.25, 15.0),
    "severe": (23.0, 22.86, 23.0),
}

DEFAULT_GUST_TRIGGER_STEPS = (500, 1500)


@dataclass
class WindSample:
    """Total wind decomposition for one simulation step.

    Steady and gust components are NED vectors; turbulence velocity and
    angular rates are body-frame, as produced by the Dryden filters.
    """

    steady_ned: np.ndarray
    turb_body: np.ndarray
    turb_rates_body: np.ndarray
    gust_ned: np.ndarray

    @staticmethod
    def zero(batch_shape=()) -> "WindSample":
        z = np.zeros(batch_shape + (3,))
        return WindSample(z.copy(), z.copy(), z.copy(), z.copy())

    def ned_total(self) -> np.ndarray:
        return self.steady_ned + self.gust_ned


@dataclass
class GustSpec:
    """Deterministic gust schedule: cosine ramp up, steady plateau, ramp down."""

    trigger_steps: tuple = DEFAULT_GUST_TRIGGER_STEPS
    startup_s: float = 0.25
    steady_s: float = 0.5
    end_s: float = 0.25
    magnitude: float = 0.0
    # one unit NED direction row per trigger
    directions_ned: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    dt: float = 0.01

    def __post_init__(self):
        if min(self.startup_s, self.steady_s, self.end_s) <= 0.0:
            raise ConfigError("gust segment durations must be positive")
        self.directions_ned = np.atleast_2d(np.asarray(self.directions_ned, dtype=float))
        if self.magnitude > 0.0 and len(self.directions_ned) != len(self.trigger_steps):
            raise ConfigError("one gust direction required per trigger")

    def duration_s(self) -> float:
        return self.startup_s + self.steady_s + self.end_s


def gust_envelope(tau: float, spec: GustSpec) -> float:
    """Scalar magnitude envelope at time tau since a trigger."""
    if tau < 0.0 or tau > spec.duration_s():
        return 0.0
    if tau < spec.startup_s:
        return 0.5 * spec.magnitude * (1.0 - np.cos(np.pi * tau / spec.startup_s))
    if tau < spec.startup_s + spec.steady_s:
        return spec.magnitude
    tau_end = tau - spec.startup_s - spec.steady_s
    return 0.5 * spec.magnitude * (1.0 + np.cos(np.pi * tau_end / spec.end_s))


def gust_velocity(t: float, spec: GustSpec) -> np.ndarray:
    """NED gust velocity at time t, summing any active trigger windows."""
    out = np.zeros(3)
    if spec.magnitude <= 0.0:
        return out
    for step, direction in zip(spec.trigger_steps, spec.directions_ned):
        out += gust_envelope(t - step * spec.dt, spec) * direction
    return out


class DrydenState:
    """Dryden shaping-filter memory for the u, v, w, p, q, r channels.

    First-order channels (u, p) use exact zero-order-hold updates; the
    second-order v/w channels and the derivative-type q/r channels use the
    bilinear transform, with coefficients recomputed from the current
    airspeed each step. Driving noise has PSD matched to the spectral
    normalization (samples scaled by sqrt(pi/dt)).
    """

    def __init__(self, w20: float, wingspan: float, rng: np.random.Generator,
                 batch_shape=()):
        self.w20 = float(w20)
        self.wingspan = float(wingspan)
        self.rng = rng
        self.batch_shape = batch_shape
        z = lambda: np.zeros(batch_shape)
        # second-order sections: two internal registers each (DF2-transposed)
        self.v_s1, self.v_s2 = z(), z()
        self.w_s1, self.w_s2 = z(), z()
        self.u_state = z()
        self.p_state = z()
        # derivative filters remember previous input and output
        self.q_in, self.q_out = z(), z()
        self.r_in, self.r_out = z(), z()
        self.last_turb = np.zeros(batch_shape + (3,))
        self.last_rates = np.zeros(batch_shape + (3,))
        self.frozen_steps = 0

    def intensities(self, altitude_m: float):
        """(sigma_u, sigma_v, sigma_w, L_u, L_v, L_w) in SI units."""
        h_ft = np.clip(altitude_m * FT_PER_M, 10.0, 1000.0)
        sigma_w = 0.1 * self.w20
        ratio = (0.177 + 0.000823 * h_ft) ** 0.4
        sigma_u = sigma_w / ratio
        lw_ft = h_ft
        lu_ft = h_ft / (0.177 + 0.000823 * h_ft) ** 1.2
        return sigma_u, sigma_u, sigma_w, lu_ft / FT_PER_M, lu_ft / FT_PER_M, lw_ft / FT_PER_M


def _second_order_step(u, s1, s2, gain, c1, a1, a2, dt):
    """One bilinear-transform step of gain*(1 + c1 s)/(1 + a1 s + a2 s^2)."""
    w = 2.0 / dt
    d0 = 1.0 + a1 * w + a2 * w * w
    b0 = gain * (1.0 + c1 * w) / d0
    b1 = gain * 2.0 / d0
    b2 = gain * (1.0 - c1 * w) / d0
    c_1 = (2.0 - 2.0 * a2 * w * w) / d0
    c_2 = (1.0 - a1 * w + a2 * w * w) / d0
    y = b0 * u + s1
    s1_new = b1 * u - c_1 * y + s2
    s2_new = b2 * u - c_2 * y
    return y, s1_new, s2_new


def dryden_step(d: DrydenState, Va, altitude_m: float, dt: float):
    """Advance all six turbulence channels by dt.

    Returns (turb_body, turb_rates_body). Entries where Va <= 0 keep the
    previous output (filters frozen, counted in d.frozen_steps).
    """
    va = np.asarray(Va, dtype=float)
    active = va > 0.0
    if not np.any(active):
        d.frozen_steps += 1
        return d.last_turb.copy(), d.last_rates.copy()
    if d.w20 <= 0.0:
        return np.zeros(d.batch_shape + (3,)), np.zeros(d.batch_shape + (3,))

    va_safe = np.where(active, va, 1.0)
    sig_u, sig_v, sig_w, lu, lv, lw = d.intensities(altitude_m)
    b = d.wingspan
    noise = d.rng.standard_normal((4,) + d.batch_shape) * np.sqrt(np.pi / dt)

    # u channel: first order, exact ZOH
    tau_u = lu / va_safe
    phi_u = np.exp(-dt / tau_u)
    k_u = sig_u * np.sqrt(2.0 * lu / (np.pi * va_safe))
    u_new = phi_u * d.u_state + k_u * (1.0 - phi_u) * noise[0]

    # v, w channels: second order with a zero
    def vw(sig, length, u_in, s1, s2):
        a = length / va_safe
        gain = sig * np.sqrt(length / (np.pi * va_safe))
        return _second_order_step(u_in, s1, s2, gain, np.sqrt(3.0) * a, 2.0 * a, a * a, dt)

    v_new, v_s1, v_s2 = vw(sig_v, lv, noise[1], d.v_s1, d.v_s2)
    w_new, w_s1, w_s2 = vw(sig_w, lw, noise[2], d.w_s1, d.w_s2)

    # p channel: first order, MIL spatial form
    tau_p = 4.0 * b / (np.pi * va_safe)
    phi_p = np.exp(-dt / tau_p)
    k_p = sig_w * np.sqrt(0.8 / va_safe) * (np.pi / (4.0 * b)) ** (1.0 / 6.0) / lw ** (1.0 / 3.0)
    p_new = phi_p * d.p_state + k_p * (1.0 - phi_p) * noise[3]

    # q, r channels: spatial derivatives of w and v, bilinear biproper filter
    def deriv(u_in, u_prev, y_prev, tau):
        w2 = 2.0 / dt
        den = 1.0 + tau * w2
        y = ((w2 / va_safe) * (u_in - u_prev) - (1.0 - tau * w2) * y_prev) / den
        return y

    q_new = deriv(w_new, d.q_in, d.q_out, 4.0 * b / (np.pi * va_safe))
    r_new = deriv(v_new, d.r_in, d.r_out, 3.0 * b / (np.pi * va_safe))

    turb = np.stack([u_new, v_new, w_new], axis=-1)
    rates = np.stack([p_new, q_new, r_new], axis=-1)
    if not np.all(active):
        # freeze filters elementwise where airspeed is non-positive
        d.frozen_steps += 1
        keep = active[..., None]
        turb = np.where(keep, turb, d.last_turb)
        rates = np.where(keep, rates, d.last_rates)
        u_new = np.where(active, u_new, d.u_state)
        p_new = np.where(active, p_new, d.p_state)
        v_s1 = np.where(active, v_s1, d.v_s1)
        v_s2 = np.where(active, v_s2, d.v_s2)
        w_s1 = np.where(active, w_s1, d.w_s1)
        w_s2 = np.where(active, w_s2, d.w_s2)
        q_new = np.where(active, q_new, d.q_out)
        r_new = np.where(active, r_new, d.r_out)

    d.u_state, d.p_state = u_new, p_new
    d.v_s1, d.v_s2, d.w_s1, d.w_s2 = v_s1, v_s2, w_s1, w_s2
    d.q_in, d.q_out = turb[..., 2].copy(), q_new
    d.r_in, d.r_out = turb[..., 1].copy(), r_new
    d.last_turb, d.last_rates = turb.copy(), rates.copy()
    return turb, rates


def _unit_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.uniform(-1.0, 1.0, size=3)
    n = np.linalg.norm(v)
    if n < 1e-12:
        return np.array([1.0, 0.0, 0.0])
    return v / n


def sample_wind_config(rng: np.random.Generator, mode: str, severity: str,
                       trigger_steps=DEFAULT_GUST_TRIGGER_STEPS, dt: float = 0.01):
    """Draw (steady_ned, W20, GustSpec) for an episode.

    Evaluation mode uses the calibrated severity magnitudes; training mode
    samples each magnitude uniformly from [0, severe].
    """
    if severity not in SEVERITY_TABLE:
        raise ConfigError(f"unknown wind severity {severity!r}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown wind mode {mode!r}")
    if mode == "eval":
        steady_mag, w20, gust_mag = SEVERITY_TABLE[severity]
    else:
        max_steady, max_w20, max_gust = SEVERITY_TABLE["severe"]
        steady_mag = rng.uniform(0.0, max_steady)
        w20 = rng.uniform(0.0, max_w20)
        gust_mag = rng.uniform(0.0, max_gust)
    steady = steady_mag * _unit_direction(rng) if steady_mag > 0.0 else np.zeros(3)
    dirs = np.stack([_unit_direction(rng) for _ in trigger_steps]) if gust_mag > 0.0 \
        else np.zeros((len(trigger_steps), 3))
    spec = GustSpec(trigger_steps=tuple(trigger_steps), magnitude=gust_mag,
                    directions_ned=dirs, dt=dt)
    return steady, w20, spec


class WindField:
    """Steady wind + Dryden filter state + gust schedule for one episode."""

    def __init__(self, steady_ned: np.ndarray, dryden: DrydenState, gusts: GustSpec):
        self.steady_ned = np.asarray(steady_ned, dtype=float)
        self.dryden = dryden
        self.gusts = gusts

    @staticmethod
    def calm() -> "WindField":
        rng = np.random.default_rng(0)
        return WindField(np.zeros(3), DrydenState(0.0, 1.0, rng), GustSpec())

    def sample(self, t: float, Va: float, altitude_m: float, dt: float) -> WindSample:
        turb, rates = dryden_step(self.dryden, Va, altitude_m, dt)
        return WindSample(
            steady_ned=self.steady_ned.copy(),
            turb_body=turb,
            turb_rates_body=rates,
            gust_ned=gust_velocity(t, self.gusts),
        )


def total_wind(field: WindField, t: float, Va: float, altitude_m: float, dt: float) -> WindSample:
    """Compose steady + gust (NED) and turbulence (body) into one sample."""
    return field.sample(t, Va, altitude_m, dt)
