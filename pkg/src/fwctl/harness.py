"""Evaluation harness: trajectory logging, tracking/actuation metrics,
episode runners for each controller, and campaign aggregation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import actuators
from .config import config_hash
from .controllers import RollPitchPid
from .env import EpisodeConfig, FixedWingEnv, RewardConfig
from .errors import ConfigError, FwctlError
from .planner import GroundTruthModel, PlannerConfig, mppi_plan

LOG_COLUMNS = ("t", "phi", "theta", "phi_ref", "theta_ref", "va",
               "delta_a_cmd", "delta_e_cmd", "delta_a", "delta_e", "delta_t",
               "reward", "wind_n", "wind_e", "wind_d",
               "turb_u", "turb_v", "turb_w")

# planner preset used by the ground-truth-model controller; the learned-model
# controller keeps the agent defaults from PlannerConfig
GT_PLANNER_PRESET = PlannerConfig(
    horizon=16, iterations=2, samples=96, elites=12, policy_trajs=8,
    std_init=0.3, temperature=0.5, noise_correlation=0.8)


@dataclass
class TrajectoryLog:
    """Per-step record of one episode, column-oriented."""

    data: dict
    controller: str = ""
    seed: int = 0
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.data["t"])

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    def to_csv(self, path: str):
        cols = [np.asarray(self.data[c]) for c in LOG_COLUMNS]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# controller=%s seed=%d diverged=%d\n"
                     % (self.controller, self.seed, int(self.diverged)))
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for i in range(len(self)):
                fh.write(",".join(repr(float(c[i])) for c in cols) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "TrajectoryLog":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            meta = dict(kv.split("=") for kv in header.lstrip("# ").split())
            names = fh.readline().strip().split(",")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        arr = np.array([[float(v) for v in row] for row in rows])
        data = {name: arr[:, i] for i, name in enumerate(names)}
        return cls(data=data, controller=meta.get("controller", ""),
                   seed=int(meta.get("seed", 0)), diverged=bool(int(meta.get("diverged", 0))))


def tracking_rmse(log: TrajectoryLog) -> float:
    """Mean of the roll and pitch tracking RMSE over the episode, radians."""
    if len(log) == 0:
        raise FwctlError("empty trajectory log")
    e_phi = log.column("phi") - log.column("phi_ref")
    e_theta = log.column("theta") - log.column("theta_ref")
    return 0.5 * (float(np.sqrt(np.mean(e_phi ** 2)))
                  + float(np.sqrt(np.mean(e_theta ** 2))))


def actuation_fluctuation(logs, source: str = "actual") -> float:
    """Mean absolute per-step change of the aileron/elevator positions.

    Averaged over the two surfaces and over episodes, in normalized [-1, 1]
    units; `source` selects actual deflections (default) or commanded.
    """
    cols = ("delta_a", "delta_e") if source == "actual" else ("delta_a_cmd", "delta_e_cmd")
    if isinstance(logs, TrajectoryLog):
        logs = [logs]
    total = 0.0
    for name in cols:
        per_ep = []
        for log in logs:
            x = np.asarray(log.column(name))
            if len(x) < 2:
                raise FwctlError("log too short for actuation fluctuation")
            per_ep.append(float(np.mean(np.abs(np.diff(x)))))
        total += float(np.mean(per_ep))
    return 0.5 * total


class PidController:
    name = "pid"

    def __init__(self):
        self._pid = RollPitchPid()

    def reset(self, env: FixedWingEnv):
        self._pid.reset()

    def act(self, obs: np.ndarray, env: FixedWingEnv) -> np.ndarray:
        return self._pid.update(obs[8], obs[9], env.cfg.dt)


class MppiGroundTruthController:
    name = "mppi-gt"

    def __init__(self, seed: int, planner: PlannerConfig | None = None):
        self.planner_cfg = planner or GT_PLANNER_PRESET
        self._rng = np.random.default_rng(seed)
        self._warm = None

    def reset(self, env: FixedWingEnv):
        self._warm = None

    def act(self, obs: np.ndarray, env: FixedWingEnv) -> np.ndarray:
        sim, wind = env.plan_snapshot()
        model = GroundTruthModel(env.model, wind, env.cfg.reward, env.cfg.dt,
                                 env.cfg.va_ref)
        action, self._warm, _ = mppi_plan(model, sim, self._warm, self.planner_cfg,
                                          self._rng)
        return action


class MppiLearnedController:
    name = "mppi-learned"

    def __init__(self, checkpoint: str, seed: int, planner: PlannerConfig | None = None):
        from .learn import LearnedModel, load_checkpoint
        self._model = LearnedModel(load_checkpoint(checkpoint))
        self.planner_cfg = planner or PlannerConfig()
        self._rng = np.random.default_rng(seed)
        self._warm = None

    def reset(self, env: FixedWingEnv):
        self._warm = None

    def act(self, obs: np.ndarray, env: FixedWingEnv) -> np.ndarray:
        action, self._warm, _ = mppi_plan(self._model, obs, self._warm,
                                          self.planner_cfg, self._rng)
        return action


class CallableController:
    """Adapter for externally supplied policies: fn(obs) -> action."""

    name = "external"

    def __init__(self, fn):
        self._fn = fn

    def reset(self, env: FixedWingEnv):
        pass

    def act(self, obs: np.ndarray, env: FixedWingEnv) -> np.ndarray:
        return np.asarray(self._fn(obs), dtype=float)


def make_controller(spec: str, seed: int):
    """Controller from its id: pid | mppi-gt | mppi-learned:<checkpoint>."""
    if spec == "pid":
        return PidController()
    if spec == "mppi-gt":
        return MppiGroundTruthController(seed=seed + 77_000_001)
    if spec.startswith("mppi-learned:"):
        path = spec.split(":", 1)[1]
        if not os.path.exists(path):
            raise ConfigError(f"checkpoint not found: {path}")
        return MppiLearnedController(path, seed=seed + 77_000_001)
    if spec == "external":
        raise ConfigError("external controllers are driven through the "
                          "environment server, not run_episode")
    raise ConfigError(f"unknown controller {spec!r}")


def run_episode(controller, env_cfg: EpisodeConfig, seed: int) -> TrajectoryLog:
    """Deterministic episode under (controller, config, seed).

    `controller` is a controller id string or a controller object with
    reset/act. On divergence the log is truncated at the failed step and
    flagged.
    """
    if isinstance(controller, str):
        controller = make_controller(controller, seed)
    cfg = replace(env_cfg, seed=seed)
    env = FixedWingEnv(cfg)
    obs = env.reset()
    controller.reset(env)

    rows = {name: [] for name in LOG_COLUMNS}
    diverged = False
    done = False
    while not done:
        action = controller.act(obs, env)
        obs, reward, done, info = env.step(action)
        diverged = bool(info["diverged"])
        rows["t"].append(info["t"])
        rows["phi"].append(info["phi"])
        rows["theta"].append(info["theta"])
        rows["phi_ref"].append(info["phi_ref"])
        rows["theta_ref"].append(info["theta_ref"])
        rows["va"].append(info["va"])
        rows["delta_a_cmd"].append(info["commanded_action"][0])
        rows["delta_e_cmd"].append(info["commanded_action"][1])
        rows["delta_a"].append(info["deflections_norm"][0])
        rows["delta_e"].append(info["deflections_norm"][1])
        rows["delta_t"].append(info["delta_t_cmd"])
        rows["reward"].append(reward)
        rows["wind_n"].append(info["wind_ned"][0])
        rows["wind_e"].append(info["wind_ned"][1])
        rows["wind_d"].append(info["wind_ned"][2])
        rows["turb_u"].append(info["wind_turb_body"][0])
        rows["turb_v"].append(info["wind_turb_body"][1])
        rows["turb_w"].append(info["wind_turb_body"][2])
    data = {k: np.asarray(v) for k, v in rows.items()}
    name = controller.name if hasattr(controller, "name") else "custom"
    return TrajectoryLog(data=data, controller=name, seed=seed, diverged=diverged)


@dataclass
class CampaignCell:
    controller: str
    severity: str = "off"
    difficulty: str = "nominal"
    reward_mode: str = "base"
    steps: int = 2000

    def env_config(self) -> EpisodeConfig:
        return EpisodeConfig(steps=self.steps, difficulty=self.difficulty,
                             severity=self.severity,
                             reward=RewardConfig.named(self.reward_mode))

    def label(self) -> str:
        return f"{self.controller}/{self.severity}/{self.difficulty}/{self.reward_mode}"


@dataclass
class CampaignReport:
    rows: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    config_hash: str = ""

    HEADER = ("controller", "severity", "difficulty", "reward_mode", "n_seeds",
              "rmse_mean", "rmse_sem", "xi_actual_mean", "xi_commanded_mean",
              "n_diverged")

    def to_csv(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# config_hash=%s seeds=%s\n"
                     % (self.config_hash, ":".join(map(str, self.seeds))))
            fh.write(",".join(self.HEADER) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                                  for k in self.HEADER) + "\n")

    def to_text(self) -> str:
        lines = ["Campaign report (RMSE x 1e-2 rad; actuation fluctuation on "
                 "actual deflections, normalized units)",
                 f"config hash: {self.config_hash}   seeds: {len(self.seeds)}", ""]
        fmt = "%-14s %-9s %-9s %-7s %12s %12s %10s"
        lines.append(fmt % ("controller", "severity", "difficulty", "reward",
                            "RMSE(x1e-2)", "+/-SEM", "ActFluct"))
        for row in self.rows:
            sem = "n/a" if row["rmse_sem"] != row["rmse_sem"] else \
                "%.2f" % (row["rmse_sem"] * 100.0)
            lines.append(fmt % (row["controller"], row["severity"], row["difficulty"],
                                row["reward_mode"], "%.2f" % (row["rmse_mean"] * 100.0),
                                sem, "%.4f" % row["xi_actual_mean"]))
        return "\n".join(lines) + "\n"


def _cell_seed(root: int, cell_idx: int, i: int) -> int:
    return int(np.random.SeedSequence((root, cell_idx, i)).generate_state(1)[0] % (2 ** 31))


def _run_cell(args):
    cell, cell_idx, root_seed, n_seeds, out_dir = args
    logs = []
    n_div = 0
    for i in range(n_seeds):
        seed = _cell_seed(root_seed, cell_idx, i)
        log = run_episode(cell.controller, cell.env_config(), seed)
        if out_dir:
            safe = cell.label().replace("/", "_").replace(":", "_")
            log.to_csv(os.path.join(out_dir, f"trajectory_{safe}_{i}.csv"))
        logs.append(log)
        n_div += int(log.diverged)
    rmses = np.array([tracking_rmse(l) for l in logs])
    row = {
        "controller": cell.controller, "severity": cell.severity,
        "difficulty": cell.difficulty, "reward_mode": cell.reward_mode,
        "n_seeds": n_seeds,
        "rmse_mean": float(np.mean(rmses)),
        "rmse_sem": float(np.std(rmses, ddof=1) / np.sqrt(len(rmses)))
        if len(rmses) >= 2 else float("nan"),
        "xi_actual_mean": actuation_fluctuation(logs, "actual"),
        "xi_commanded_mean": actuation_fluctuation(logs, "commanded"),
        "n_diverged": n_div,
    }
    return cell_idx, row


def evaluate_campaign(cells, n_seeds: int, root_seed: int = 0,
                      out_dir: str | None = None, workers: int = 1) -> CampaignReport:
    """Run every (controller, severity, difficulty) cell over n_seeds episodes.

    Per-cell seeds derive only from (root_seed, cell index, episode index),
    so results are independent of execution order and worker count. Cell
    failures are recorded (rmse NaN) without aborting the campaign.
    """
    if n_seeds < 1:
        raise ConfigError("n_seeds must be >= 1")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    jobs = [(cell, i, root_seed, n_seeds, out_dir) for i, cell in enumerate(cells)]
    results = {}
    if workers > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(workers) as pool:
            for idx, row in pool.imap_unordered(_run_cell, jobs):
                results[idx] = row
    else:
        for job in jobs:
            try:
                idx, row = _run_cell(job)
            except FwctlError as exc:
                idx = job[1]
                row = {"controller": job[0].controller, "severity": job[0].severity,
                       "difficulty": job[0].difficulty, "reward_mode": job[0].reward_mode,
                       "n_seeds": 0, "rmse_mean": float("nan"), "rmse_sem": float("nan"),
                       "xi_actual_mean": float("nan"), "xi_commanded_mean": float("nan"),
                       "n_diverged": 0, "error": str(exc)}
            results[idx] = row
    seeds = [_cell_seed(root_seed, 0, i) for i in range(n_seeds)]
    report = CampaignReport(rows=[results[i] for i in range(len(cells))], seeds=seeds,
                            config_hash=config_hash(root_seed, n_seeds,
                                                    [c.label() for c in cells]))
    if out_dir:
        report.to_csv(os.path.join(out_dir, "report.csv"))
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
    return report


def load_campaign_matrix(path: str):
    """Campaign cells from an INI matrix file (cross product of the lists)."""
    from .config import read_ini
    parser = read_ini(path)
    if not parser.has_section("campaign"):
        raise ConfigError("matrix file needs a [campaign] section")
    sec = parser["campaign"]
    split = lambda s: [x.strip() for x in s.split(",") if x.strip()]
    controllers = split(sec.get("controllers", "pid"))
    severities = split(sec.get("severities", "off"))
    difficulties = split(sec.get("difficulties", "nominal"))
    rewards = split(sec.get("reward_modes", "base"))
    steps = int(sec.get("steps", "2000"))
    return [CampaignCell(c, sv, d, rm, steps)
            for c in controllers for sv in severities for d in difficulties
            for rm in rewards]
