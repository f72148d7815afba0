"""TCP environment server speaking the `fwctl-env/1` protocol.

One connection hosts one session (one environment instance); messages are
newline-delimited JSON objects, strictly request/reply. Commands:

    {"cmd": "spec"}
    {"cmd": "reset", "seed": 7, "difficulty": "nominal", "severity": "off",
     "reward_mode": "base"}            (all fields beyond cmd optional)
    {"cmd": "step", "action": [da, de]}
    {"cmd": "close"}

Replies carry {"obs": [...], "reward": r, "done": b, "info": {...}} for steps,
{"obs": [...]} for resets, and {"error": code, "detail": ...} on failure; a
protocol error leaves the session usable. Floats serialize via repr, which
round-trips IEEE-754 doubles exactly.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import replace

import numpy as np

from .env import ACTION_DIM, OBS_DIM, OBS_FIELDS, EpisodeConfig, FixedWingEnv, RewardConfig
from .errors import ConfigError, FwctlError, LifecycleError

PROTOCOL = "fwctl-env/1"

RESET_FIELDS = ("seed", "difficulty", "severity", "reward_mode", "steps",
                "roll_only", "wind_mode")


def spec_payload(defaults: EpisodeConfig) -> dict:
    return {
        "protocol": PROTOCOL,
        "obs_dim": OBS_DIM,
        "action_dim": ACTION_DIM,
        "action_low": [-1.0, -1.0],
        "action_high": [1.0, 1.0],
        "obs_fields": list(OBS_FIELDS),
        "dt": defaults.dt,
        "episode_steps": defaults.steps,
    }


class _Session:
    def __init__(self, defaults: EpisodeConfig):
        self.defaults = defaults
        self.env: FixedWingEnv | None = None
        self.done = False

    def handle(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        if cmd == "spec":
            return spec_payload(self.defaults)
        if cmd == "reset":
            return self._reset(msg)
        if cmd == "step":
            return self._step(msg)
        if cmd == "close":
            return {"ok": True, "close": True}
        return {"error": "unknown_cmd", "detail": f"unsupported command {cmd!r}"}

    def _reset(self, msg: dict) -> dict:
        cfg = self.defaults
        try:
            if "steps" in msg:
                cfg = replace(cfg, steps=int(msg["steps"]))
            if "difficulty" in msg:
                cfg = replace(cfg, difficulty=str(msg["difficulty"]))
            if "severity" in msg:
                cfg = replace(cfg, severity=str(msg["severity"]))
            if "wind_mode" in msg:
                cfg = replace(cfg, wind_mode=str(msg["wind_mode"]))
            if "roll_only" in msg:
                cfg = replace(cfg, roll_only=bool(msg["roll_only"]))
            if "reward_mode" in msg:
                cfg = replace(cfg, reward=RewardConfig.named(str(msg["reward_mode"])))
            if "seed" in msg:
                cfg = replace(cfg, seed=int(msg["seed"]))
            self.env = FixedWingEnv(cfg)
            obs = self.env.reset()
        except (ConfigError, ValueError, TypeError) as exc:
            return {"error": "bad_config", "detail": str(exc)}
        self.done = False
        return {"obs": obs.tolist()}

    def _step(self, msg: dict) -> dict:
        if self.env is None:
            return {"error": "not_reset", "detail": "step before reset"}
        if self.done:
            return {"error": "episode_done", "detail": "reset to start a new episode"}
        action = msg.get("action")
        if (not isinstance(action, (list, tuple)) or len(action) != ACTION_DIM
                or not all(isinstance(x, (int, float)) for x in action)):
            return {"error": "bad_action",
                    "detail": f"action must be a list of {ACTION_DIM} numbers"}
        try:
            obs, reward, done, info = self.env.step(np.asarray(action, dtype=float))
        except LifecycleError as exc:
            return {"error": "lifecycle", "detail": str(exc)}
        except FwctlError as exc:
            return {"error": "env_error", "detail": str(exc)}
        self.done = done
        return {"obs": obs.tolist(), "reward": reward, "done": done, "info": info}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = _Session(self.server.env_defaults)
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
                if not isinstance(msg, dict):
                    raise ValueError("message must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._reply({"error": "bad_message", "detail": str(exc)})
                continue
            reply = session.handle(msg)
            close = reply.pop("close", False)
            self._reply(reply)
            if close:
                return

    def _reply(self, payload: dict):
        self.wfile.write(json.dumps(payload).encode("utf-8") + b"\n")
        self.wfile.flush()


class EnvServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, defaults: EpisodeConfig):
        super().__init__(address, _Handler)
        self.env_defaults = defaults


def parse_bind(bind: str):
    host, _, port = bind.rpartition(":")
    if not host:
        raise ConfigError(f"bind address must be host:port, got {bind!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise ConfigError(f"bad port in {bind!r}") from exc


def make_server(bind: str, defaults: EpisodeConfig | None = None) -> EnvServer:
    host, port = parse_bind(bind)
    try:
        return EnvServer((host, port), defaults or EpisodeConfig())
    except OSError as exc:
        raise ConfigError(f"cannot bind {bind}: {exc}") from exc


def serve(bind: str, defaults: EpisodeConfig | None = None):
    """Run the server until interrupted; prints the bound address on start."""
    server = make_server(bind, defaults)
    host, port = server.server_address[:2]
    print(f"{PROTOCOL} listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()


def serve_background(bind: str, defaults: EpisodeConfig | None = None):
    """Start the server on a daemon thread; returns (server, (host, port))."""
    server = make_server(bind, defaults)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[:2]
