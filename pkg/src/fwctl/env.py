"""Episode environment: observation construction, rewards, reference and
wind sampling, and the reset/step lifecycle.

The simulation state (rigid body + actuators + throttle PI + bookkeeping) is
kept in a SimState of plain arrays that broadcast over an optional leading
batch dimension. `advance_sim` is the single transition routine shared by
the environment and by planner rollouts, which keeps model-based planning
exactly consistent with the environment dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import actuators, controllers, fastdyn
from .airframe import AeroModel, relative_air_arrays, rk4_step_arrays
from .errors import ConfigError, LifecycleError
from .frames import quat_to_euler
from .wind import (
    DEFAULT_GUST_TRIGGER_STEPS,
    DrydenState,
    GustSpec,
    WindField,
    WindSample,
    dryden_step,
    gust_velocity,
    sample_wind_config,
)

OBS_FIELDS = (
    "phi", "theta", "va", "p_r", "q_r", "r_r", "alpha", "beta",
    "e_phi", "e_theta", "ie_phi", "ie_theta",
    "last_delta_a_cmd", "last_delta_e_cmd",
)
OBS_DIM = len(OBS_FIELDS)
ACTION_DIM = 2

# per-field scales for the optional normalization hook (off by default)
OBS_SCALE = np.array([1.0, 1.0, 20.0, 5.0, 5.0, 5.0, 0.5, 0.5,
                      1.0, 1.0, 5.0, 5.0, 1.0, 1.0])

NOMINAL_ROLL_RANGE = np.radians((-45.0, 45.0))
NOMINAL_PITCH_RANGE = np.radians((-25.0, 25.0))
HARD_ROLL_BAND = np.radians((45.0, 60.0))
HARD_PITCH_BAND = np.radians((25.0, 30.0))


def sample_reference(difficulty: str, rng: np.random.Generator, roll_only: bool = False):
    """Draw (phi_ref, theta_ref) in radians for the given difficulty."""
    if difficulty == "nominal":
        phi = rng.uniform(*NOMINAL_ROLL_RANGE)
        theta = 0.0 if roll_only else rng.uniform(*NOMINAL_PITCH_RANGE)
    elif difficulty == "hard":
        phi = rng.uniform(*HARD_ROLL_BAND) * (1.0 if rng.integers(2) else -1.0)
        if roll_only:
            theta = 0.0
        else:
            theta = rng.uniform(*HARD_PITCH_BAND) * (1.0 if rng.integers(2) else -1.0)
    else:
        raise ConfigError(f"unknown reference difficulty {difficulty!r}")
    return phi, theta


@dataclass
class RewardConfig:
    """Clipped tracking reward, optionally with an action-variation penalty."""

    zeta_phi: float = 3.3
    zeta_theta: float = 2.25
    zeta_delta: float = 2.0
    c_phi: float = 0.5
    c_theta: float = 0.5
    c_delta: float = 0.0
    mode: str = "base"  # base | avp

    def __post_init__(self):
        total = self.c_phi + self.c_theta + (self.c_delta if self.mode == "avp" else 0.0)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError("reward clip coefficients must sum to 1")
        if self.mode not in ("base", "avp"):
            raise ConfigError(f"unknown reward mode {self.mode!r}")

    @classmethod
    def base(cls) -> "RewardConfig":
        return cls()

    @classmethod
    def avp(cls) -> "RewardConfig":
        return cls(c_phi=0.25, c_theta=0.25, c_delta=0.5, mode="avp")

    @classmethod
    def avp_ppo_profile(cls) -> "RewardConfig":
        return cls(c_phi=0.45, c_theta=0.45, c_delta=0.1, mode="avp")

    @classmethod
    def named(cls, name: str) -> "RewardConfig":
        try:
            return {"base": cls.base, "avp": cls.avp, "avp-ppo": cls.avp_ppo_profile}[name]()
        except KeyError as exc:
            raise ConfigError(f"unknown reward profile {name!r}") from exc


def reward_base(phi, theta, phi_ref, theta_ref, cfg: RewardConfig):
    """Negative clipped tracking error; in [-1, 0] for the default clips."""
    r_phi = np.clip(np.abs(phi - phi_ref) / cfg.zeta_phi, 0.0, cfg.c_phi)
    r_theta = np.clip(np.abs(theta - theta_ref) / cfg.zeta_theta, 0.0, cfg.c_theta)
    return -(r_phi + r_theta)


def reward_avp(phi, theta, phi_ref, theta_ref, action, prev_action, cfg: RewardConfig):
    """Tracking reward plus a penalty on consecutive commanded-action change."""
    delta = 0.5 * np.sum(np.abs(np.asarray(action) - np.asarray(prev_action)), axis=-1)
    r_delta = np.clip(delta / cfg.zeta_delta, 0.0, cfg.c_delta)
    return reward_base(phi, theta, phi_ref, theta_ref, cfg) - r_delta


def reward_for(cfg: RewardConfig, phi, theta, phi_ref, theta_ref, action, prev_action):
    if cfg.mode == "avp":
        return reward_avp(phi, theta, phi_ref, theta_ref, action, prev_action, cfg)
    return reward_base(phi, theta, phi_ref, theta_ref, cfg)


@dataclass
class EpisodeConfig:
    """Episode setup: initial conditions, references, wind, reward, seed."""

    steps: int = 2000
    dt: float = 0.01
    airframe: str = "x8"
    init_altitude_m: float = 600.0
    init_airspeed: float = 17.0
    va_ref: float = 17.0
    difficulty: str = "nominal"
    severity: str = "off"
    wind_mode: str = "eval"  # eval | train
    wind_components: tuple = ("steady", "turbulence", "gusts")
    gust_trigger_steps: tuple = DEFAULT_GUST_TRIGGER_STEPS
    reward: RewardConfig = field(default_factory=RewardConfig.base)
    seed: int = 0
    roll_only: bool = False
    reference_resample_steps: int = 0  # 0 keeps references fixed all episode
    normalize_obs: bool = False
    divergence_attitude_rad: float = np.radians(85.0)

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")

    def key(self) -> tuple:
        """Hashable summary used for report provenance."""
        return (self.steps, self.dt, self.airframe, self.init_altitude_m,
                self.init_airspeed, self.va_ref, self.difficulty, self.severity,
                self.wind_mode, self.wind_components, self.gust_trigger_steps,
                self.reward.mode, self.seed, self.roll_only,
                self.reference_resample_steps)


@dataclass
class SimState:
    """Full per-vehicle simulation state as broadcastable arrays."""

    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray
    omega: np.ndarray
    servo_pos: np.ndarray   # (..., 2) aileron, elevator rad
    servo_vel: np.ndarray
    throttle: np.ndarray    # (...,)
    pi_integral: np.ndarray
    phi_ref: np.ndarray
    theta_ref: np.ndarray
    ie_phi: np.ndarray
    ie_theta: np.ndarray
    last_action: np.ndarray  # (..., 2) previous commanded action

    def copy(self) -> "SimState":
        return SimState(**{k: np.array(getattr(self, k), dtype=float)
                           for k in self.__dataclass_fields__})

    def tile(self, n: int) -> "SimState":
        """Replicate a scalar state into a batch of n."""
        out = {}
        for k in self.__dataclass_fields__:
            a = np.asarray(getattr(self, k), dtype=float)
            out[k] = np.broadcast_to(a, (n,) + a.shape).copy()
        return SimState(**out)

    @staticmethod
    def initial(cfg: "EpisodeConfig", phi_ref: float, theta_ref: float) -> "SimState":
        return SimState(
            pos=np.array([0.0, 0.0, -cfg.init_altitude_m]),
            quat=np.array([1.0, 0.0, 0.0, 0.0]),
            vel=np.array([cfg.init_airspeed, 0.0, 0.0]),
            omega=np.zeros(3),
            servo_pos=np.zeros(2),
            servo_vel=np.zeros(2),
            throttle=np.float64(0.0),
            pi_integral=np.float64(0.0),
            phi_ref=np.float64(phi_ref),
            theta_ref=np.float64(theta_ref),
            ie_phi=np.float64(0.0),
            ie_theta=np.float64(0.0),
            last_action=np.zeros(2),
        )


_PACK_FIELDS = (("pos", 3), ("quat", 4), ("vel", 3), ("omega", 3),
                ("servo_pos", 2), ("servo_vel", 2), ("throttle", 1),
                ("pi_integral", 1), ("phi_ref", 1), ("theta_ref", 1),
                ("ie_phi", 1), ("ie_theta", 1), ("last_action", 2))


def pack_sim(sim: SimState) -> np.ndarray:
    """Flatten a SimState into a (..., SIM_DIM) array for the fast kernel."""
    cols = []
    for name, width in _PACK_FIELDS:
        a = np.asarray(getattr(sim, name), dtype=float)
        cols.append(a[..., None] if width == 1 else a)
    return np.ascontiguousarray(np.concatenate(cols, axis=-1))


def unpack_sim(arr: np.ndarray) -> SimState:
    out = {}
    i = 0
    for name, width in _PACK_FIELDS:
        out[name] = arr[..., i] if width == 1 else arr[..., i:i + width]
        i += width
    return SimState(**out)


def pack_wind(wind: WindSample) -> np.ndarray:
    """Shared 9-vector (total NED, body turbulence, body turbulence rates)."""
    return np.ascontiguousarray(np.concatenate(
        [wind.ned_total(), wind.turb_body, wind.turb_rates_body]).astype(float))


def kernel_args(model: AeroModel,
                servo_params: actuators.ServoParams = actuators.ServoParams(),
                throttle_params: actuators.ThrottleParams = actuators.ThrottleParams()):
    """Scalar/array argument tail for fastdyn.advance_kernel."""
    return (model.mass, model.gravity, model.rho, model.S, model.b, model.c,
            model.thrust_gain,
            controllers.AIRSPEED_GAINS[0], controllers.AIRSPEED_GAINS[1],
            servo_params.omega0, servo_params.zeta, servo_params.max_deflection,
            servo_params.max_rate, throttle_params.time_constant,
            np.ascontiguousarray(model.inertia), np.ascontiguousarray(model.inertia_inv),
            np.ascontiguousarray(model.term_weights))


def _extras_from_kernel(ex: np.ndarray) -> dict:
    return {
        "phi": ex[..., fastdyn.EX_PHI], "theta": ex[..., fastdyn.EX_THETA],
        "e_phi": ex[..., fastdyn.EX_EPHI], "e_theta": ex[..., fastdyn.EX_ETHETA],
        "va": ex[..., fastdyn.EX_VA], "alpha": ex[..., fastdyn.EX_ALPHA],
        "beta": ex[..., fastdyn.EX_BETA],
        "omega_r": ex[..., fastdyn.EX_PR:fastdyn.EX_RR + 1],
        "degenerate_air": ex[..., fastdyn.EX_DEGEN] > 0.5,
        "delta_t_cmd": ex[..., fastdyn.EX_DTCMD],
        "cmd": ex[..., fastdyn.EX_CMDA:fastdyn.EX_CMDE + 1],
    }


def advance_sim(sim: SimState, action, wind: WindSample, model: AeroModel,
                dt: float, va_ref: float,
                servo_params: actuators.ServoParams = actuators.ServoParams(),
                throttle_params: actuators.ThrottleParams = actuators.ThrottleParams()):
    """One transition of the full simulation state under a wind sample.

    Sequencing: throttle PI on the current relative airspeed, actuator
    dynamics, then rigid-body RK4, then error/integral bookkeeping. Returns
    (new_state, extras) where extras carries the relative-air quantities of
    the new state under the same wind sample. Dispatches to the compiled
    batched kernel; `advance_sim_reference` is the plain-numpy twin.
    """
    packed = pack_sim(sim)
    batched = packed.ndim == 2
    if not batched:
        packed = packed[None]
    act = np.asarray(action, dtype=float)
    act = np.ascontiguousarray(np.broadcast_to(act, packed.shape[:1] + (ACTION_DIM,)))
    new_packed, ex = fastdyn.advance_kernel(
        packed, act, pack_wind(wind), dt, va_ref,
        *kernel_args(model, servo_params, throttle_params))
    if not batched:
        new_packed, ex = new_packed[0], ex[0]
    return unpack_sim(new_packed), _extras_from_kernel(ex)


def advance_sim_reference(sim: SimState, action, wind: WindSample, model: AeroModel,
                          dt: float, va_ref: float,
                          servo_params: actuators.ServoParams = actuators.ServoParams(),
                          throttle_params: actuators.ThrottleParams = actuators.ThrottleParams()):
    """Pure-numpy twin of advance_sim, kept as an independent cross-check."""
    cmd = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    wind_ned = wind.ned_total()

    _, _, va_now, _, _, _ = relative_air_arrays(
        sim.vel, sim.omega, sim.quat, wind_ned, wind.turb_body, wind.turb_rates_body)
    delta_t_cmd, pi_integral = controllers.pi_airspeed_arrays(
        va_now, va_ref, sim.pi_integral, dt)

    servo_pos, servo_vel = actuators.servo_step_arrays(
        sim.servo_pos, sim.servo_vel, cmd, dt, servo_params)
    throttle = actuators.throttle_step_arrays(sim.throttle, delta_t_cmd, dt, throttle_params)

    pos, quat, vel, omega = rk4_step_arrays(
        sim.pos, sim.quat, sim.vel, sim.omega,
        servo_pos[..., 0], servo_pos[..., 1], throttle,
        wind_ned, wind.turb_body, wind.turb_rates_body, model, dt)

    phi, theta, _ = quat_to_euler(quat)
    e_phi = sim.phi_ref - phi
    e_theta = sim.theta_ref - theta
    new = SimState(
        pos=pos, quat=quat, vel=vel, omega=omega,
        servo_pos=servo_pos, servo_vel=servo_vel, throttle=throttle,
        pi_integral=pi_integral,
        phi_ref=sim.phi_ref, theta_ref=sim.theta_ref,
        ie_phi=sim.ie_phi + e_phi * dt,
        ie_theta=sim.ie_theta + e_theta * dt,
        last_action=cmd,
    )
    v_r, omega_r, va, alpha, beta, degen = relative_air_arrays(
        vel, omega, quat, wind_ned, wind.turb_body, wind.turb_rates_body)
    extras = {
        "phi": phi, "theta": theta, "e_phi": e_phi, "e_theta": e_theta,
        "va": va, "alpha": alpha, "beta": beta, "omega_r": omega_r,
        "degenerate_air": degen, "delta_t_cmd": delta_t_cmd, "cmd": cmd,
    }
    return new, extras


def build_observation(sim: SimState, extras: dict) -> np.ndarray:
    """Assemble the 14-entry observation vector (see OBS_FIELDS for order)."""
    omega_r = extras["omega_r"]
    parts = [
        extras["phi"], extras["theta"], extras["va"],
        omega_r[..., 0], omega_r[..., 1], omega_r[..., 2],
        extras["alpha"], extras["beta"],
        extras["e_phi"], extras["e_theta"], sim.ie_phi, sim.ie_theta,
        sim.last_action[..., 0], sim.last_action[..., 1],
    ]
    return np.stack([np.asarray(p, dtype=float) for p in parts], axis=-1)


class FixedWingEnv:
    """Attitude-tracking episode environment with a reset/step lifecycle.

    Episodes start level at the configured altitude and airspeed, track one
    (roll, pitch) reference pair, and end after cfg.steps steps or when the
    state diverges (attitude beyond the cutoff, ground impact, or non-finite
    values). Rewards are in [-1, 0]. All randomness flows from the seed.
    """

    def __init__(self, cfg: EpisodeConfig | None = None, model: AeroModel | None = None):
        self.cfg = cfg or EpisodeConfig()
        self.model = model or AeroModel.load(self.cfg.airframe)
        self._rng = None
        self._sim = None
        self._wind_field = None
        self._wind_sample = None
        self._obs = None
        self._last_va = 0.0
        self._step_count = 0
        self._done = True
        self._started = False

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        cfg = self.cfg
        if seed is not None:
            cfg = replace(cfg, seed=seed)
            self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed)

        phi_ref, theta_ref = sample_reference(cfg.difficulty, self._rng, cfg.roll_only)
        steady, w20, gusts = sample_wind_config(
            self._rng, cfg.wind_mode, cfg.severity,
            trigger_steps=cfg.gust_trigger_steps, dt=cfg.dt)
        if "steady" not in cfg.wind_components:
            steady = np.zeros(3)
        if "turbulence" not in cfg.wind_components:
            w20 = 0.0
        if "gusts" not in cfg.wind_components:
            gusts = GustSpec(trigger_steps=cfg.gust_trigger_steps, magnitude=0.0,
                             directions_ned=np.zeros((len(cfg.gust_trigger_steps), 3)),
                             dt=cfg.dt)
        dryden = DrydenState(w20, self.model.b, self._rng)
        self._wind_field = WindField(steady, dryden, gusts)

        self._sim = SimState.initial(cfg, phi_ref, theta_ref)
        self._wind_sample = WindSample(
            steady_ned=steady.copy(), turb_body=np.zeros(3),
            turb_rates_body=np.zeros(3), gust_ned=gust_velocity(0.0, gusts))
        self._step_count = 0
        self._done = False
        self._started = True

        extras = self._air_extras()
        self._last_va = float(extras["va"])
        self._obs = self._finish_obs(build_observation(self._sim, extras))
        return self._obs.copy()

    def step(self, action):
        if not self._started:
            raise LifecycleError("step called before reset")
        if self._done:
            raise LifecycleError("step called after episode end")
        cfg = self.cfg
        action = np.asarray(action, dtype=float)
        if action.shape != (ACTION_DIM,):
            raise ConfigError(f"action must have shape ({ACTION_DIM},)")
        clipped = bool(np.any(np.abs(action) > 1.0) or not np.all(np.isfinite(action)))
        action = np.nan_to_num(action, nan=0.0)

        altitude = -float(self._sim.pos[2])
        va_for_filters = self._last_va
        t_end = (self._step_count + 1) * cfg.dt
        turb, rates = dryden_step(self._wind_field.dryden, va_for_filters, altitude, cfg.dt)
        wind = WindSample(
            steady_ned=self._wind_field.steady_ned.copy(),
            turb_body=turb, turb_rates_body=rates,
            gust_ned=gust_velocity(t_end, self._wind_field.gusts))

        prev_action = self._sim.last_action.copy()
        new_sim, extras = advance_sim(self._sim, action, wind, self.model,
                                      cfg.dt, cfg.va_ref)
        self._step_count += 1

        diverged = self._check_divergence(new_sim, extras)
        if diverged:
            self._done = True
            reward = -1.0
            info = self._info(extras, wind, clipped, diverged=True)
            return self._obs.copy(), reward, True, info

        self._sim = new_sim
        self._wind_sample = wind
        self._last_va = float(extras["va"])
        reward = float(reward_for(cfg.reward, extras["phi"], extras["theta"],
                                  new_sim.phi_ref, new_sim.theta_ref,
                                  extras["cmd"], prev_action))

        if cfg.reference_resample_steps and self._step_count < cfg.steps \
                and self._step_count % cfg.reference_resample_steps == 0:
            phi_ref, theta_ref = sample_reference(cfg.difficulty, self._rng, cfg.roll_only)
            self._sim.phi_ref = np.float64(phi_ref)
            self._sim.theta_ref = np.float64(theta_ref)
            self._sim.ie_phi = np.float64(0.0)
            self._sim.ie_theta = np.float64(0.0)
            extras["e_phi"] = phi_ref - extras["phi"]
            extras["e_theta"] = theta_ref - extras["theta"]

        if self._step_count >= cfg.steps:
            self._done = True

        self._obs = self._finish_obs(build_observation(self._sim, extras))
        info = self._info(extras, wind, clipped, diverged=False)
        return self._obs.copy(), reward, self._done, info

    # -- helpers -------------------------------------------------------------

    def _air_extras(self) -> dict:
        wind = self._wind_sample
        v_r, omega_r, va, alpha, beta, degen = relative_air_arrays(
            self._sim.vel, self._sim.omega, self._sim.quat,
            wind.ned_total(), wind.turb_body, wind.turb_rates_body)
        phi, theta, _ = quat_to_euler(self._sim.quat)
        return {
            "phi": phi, "theta": theta,
            "e_phi": self._sim.phi_ref - phi, "e_theta": self._sim.theta_ref - theta,
            "va": va, "alpha": alpha, "beta": beta, "omega_r": omega_r,
            "degenerate_air": degen, "delta_t_cmd": np.float64(0.0),
            "cmd": self._sim.last_action,
        }

    def _finish_obs(self, obs: np.ndarray) -> np.ndarray:
        if self.cfg.normalize_obs:
            return obs / OBS_SCALE
        return obs

    def _check_divergence(self, sim: SimState, extras: dict) -> bool:
        finite = all(np.all(np.isfinite(np.asarray(getattr(sim, k), dtype=float)))
                     for k in sim.__dataclass_fields__)
        if not finite:
            return True
        lim = self.cfg.divergence_attitude_rad
        if abs(float(extras["phi"])) > lim or abs(float(extras["theta"])) > lim:
            return True
        if -float(sim.pos[2]) <= 0.0:
            return True
        return False

    def _info(self, extras: dict, wind: WindSample, clipped: bool, diverged: bool) -> dict:
        sim = self._sim
        return {
            "step": self._step_count,
            "t": self._step_count * self.cfg.dt,
            "phi": float(extras["phi"]), "theta": float(extras["theta"]),
            "phi_ref": float(sim.phi_ref), "theta_ref": float(sim.theta_ref),
            "va": float(extras["va"]),
            "commanded_action": np.asarray(extras["cmd"], dtype=float).tolist(),
            "deflections_rad": sim.servo_pos.tolist(),
            "deflections_norm": (sim.servo_pos / actuators.MAX_DEFLECTION_RAD).tolist(),
            "delta_t_cmd": float(extras["delta_t_cmd"]),
            "throttle": float(sim.throttle),
            "wind_ned": wind.ned_total().tolist(),
            "wind_turb_body": wind.turb_body.tolist(),
            "wind_turb_rates": wind.turb_rates_body.tolist(),
            "action_clipped": clipped,
            "diverged": diverged,
        }

    # -- planner hooks -------------------------------------------------------

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_count(self) -> int:
        return self._step_count

    def observation(self) -> np.ndarray:
        return self._obs.copy()

    def plan_snapshot(self):
        """Copy of (SimState, frozen WindSample) for ground-truth planning."""
        if not self._started:
            raise LifecycleError("plan_snapshot before reset")
        wind = self._wind_sample
        frozen = WindSample(wind.steady_ned.copy(), wind.turb_body.copy(),
                            wind.turb_rates_body.copy(), wind.gust_ned.copy())
        return self._sim.copy(), frozen
