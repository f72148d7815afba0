"""Key-value configuration files (INI syntax) for airframe data and runs.

Aerodynamic coefficient files carry [geometry], [mass], [propulsion] and one
[coefficients.<name>] section per force/moment coefficient, where each entry
maps a term name (1, alpha, alpha2, beta, p_hat, q_hat, r_hat, delta_a,
delta_e) to its weight. Rate terms are understood as pre-normalized by
b/(2 Va) or c/(2 Va).
"""

from __future__ import annotations

import configparser
import hashlib
import importlib.resources
from pathlib import Path

import numpy as np

from .errors import ConfigError

COEFFICIENT_TERMS = ("1", "alpha", "alpha2", "beta", "p_hat", "q_hat", "r_hat",
                     "delta_a", "delta_e")
COEFFICIENT_NAMES = ("CD", "CY", "CL", "Cl", "Cm", "Cn")


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    p.optionxform = str  # keep key case
    return p


def read_ini(path_or_text, is_text: bool = False) -> configparser.ConfigParser:
    p = _parser()
    try:
        if is_text:
            p.read_string(path_or_text)
        else:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                p.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return p


def builtin_airframe_text(name: str) -> str:
    """Text of a packaged airframe file ('x8' or 'linear_test')."""
    ref = importlib.resources.files("fwctl").joinpath(f"data/{name}.ini")
    try:
        return ref.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise ConfigError(f"unknown builtin airframe {name!r}") from exc


def parse_airframe_config(parser: configparser.ConfigParser) -> dict:
    """Extract airframe constants and coefficient term lists from a parser."""
    def need(section, key):
        try:
            return float(parser[section][key])
        except KeyError as exc:
            raise ConfigError(f"missing [{section}] {key}") from exc
        except ValueError as exc:
            raise ConfigError(f"bad number for [{section}] {key}") from exc

    out = {
        "S": need("geometry", "S"),
        "b": need("geometry", "b"),
        "c": need("geometry", "c"),
        "mass": need("mass", "mass"),
        "ixx": need("mass", "ixx"),
        "iyy": need("mass", "iyy"),
        "izz": need("mass", "izz"),
        "ixz": float(parser["mass"].get("ixz", "0.0")),
        "thrust_gain": need("propulsion", "thrust_gain"),
        "rho": float(parser["environment"]["rho"]) if parser.has_option("environment", "rho") else 1.225,
        "gravity": float(parser["environment"]["gravity"]) if parser.has_option("environment", "gravity") else 9.80665,
    }
    coefficients = {}
    for name in COEFFICIENT_NAMES:
        section = f"coefficients.{name}"
        terms = []
        if parser.has_section(section):
            for term, value in parser[section].items():
                if term not in COEFFICIENT_TERMS:
                    raise ConfigError(f"unknown term {term!r} in [{section}]")
                try:
                    terms.append((term, float(value)))
                except ValueError as exc:
                    raise ConfigError(f"bad number for [{section}] {term}") from exc
        coefficients[name] = terms
    out["coefficients"] = coefficients
    return out


def load_airframe_dict(source: str) -> dict:
    """Airframe dict from a builtin name or a file path."""
    if source in ("x8", "linear_test"):
        return parse_airframe_config(read_ini(builtin_airframe_text(source), is_text=True))
    if not Path(source).exists():
        raise ConfigError(f"airframe file not found: {source}")
    return parse_airframe_config(read_ini(source))


def config_hash(*parts) -> str:
    """Short stable hash of configuration content, for report provenance."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]
