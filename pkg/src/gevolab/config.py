"""Flat dotted-key experiment configuration.

The on-disk format is a TOML-compatible subset chosen so experiment
matrices diff cleanly: one ``section.key = value`` per line, ``#``
comments, numbers, booleans, double-quoted strings, and flat lists of
numbers.  Unknown keys, type mismatches, and syntax problems report the
offending line number.  Every key has a documented default (below), so an
empty file is a valid experiment.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

# Default experiment: the level-2 gap model with slow decay at both levels
# (growth index q = 6/7).  consts.Me2/Me1 = 0 means "calibrate the zone
# amplitudes from the measured weight suprema".  time.dt = 0 means "use the
# stability bound divided by time.dt_safety".
DEFAULTS: dict[str, object] = {
    "seed": 42,
    "profile.ell": 2.0,
    "profile.k": 1.0,
    "profile.kprime": 1.0,
    "profile.sigma1": 0.9,
    "profile.sigma2": 0.8,
    "profile.T": 1.0,
    "profile.c_a3": 1.0,
    "profile.C_a3": 1.0,
    "profile.C_a2": 0.05,
    "profile.C_a1": 0.05,
    "profile.C_a0": 0.01,
    "consts.M2": 0.05,
    "consts.M1": 0.05,
    "consts.Me2": 0.0,
    "consts.Me1": 0.0,
    "consts.Mpsi2": 0.075,
    "consts.Mpsi1": 0.075,
    "consts.rho0": 0.1,
    "consts.h": 1.0,
    "consts.theta": 1.05,
    "consts.mu": 1.01,
    "cutoffs.R": 2.0,
    "cutoffs.sharpness": 1.0,
    "grid.N": 512,
    "grid.L": 40.0 * math.pi,
    "grid.dealias": 2.0 / 3.0,
    "time.dt": 0.0,
    "time.dt_safety": 1.0,
    "time.record_every": 16,
    "model.a3_sign": 1,
    "model.A2_real": 0.0,
    "model.A2_imag": 0.05,
    "model.A1_real": 0.0,
    "model.A1_imag": 0.0,
    "model.A0_real": 0.0,
    "model.A0_imag": 0.0,
    "model.datum": "gaussian",        # gaussian | gevrey
    "model.datum_rho": 1.0,           # gevrey datum radius
    "model.datum_theta": 1.2,         # gevrey datum index
    "symbols.alpha_max": 2,
    "symbols.beta_max": 2,
    "symbols.cap": 100.0,
    "symbols.x_max": 1e3,
    "symbols.xi_max": 1e3,
    "symbols.nx": 12,
    "symbols.nxi": 12,
    "symbols.nt": 5,
    "symbols.order_shift": 0.0,   # diagnostic: misdeclare every order by this
    "invert.h_ladder": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
    "invert.t": -1.0,                 # -1 builds at t = profile.T
    "evolve.m": 2.0,
    "evolve.gevrey_rho": 0.05,   # 0 disables the Gevrey-norm column
    "evolve.gevrey_theta": 1.5,
    "evolve.n_snapshots": 20,
    "evolve.energy_check": True,
    "evolve.n_checks": 21,
    "probe.theta_list": [1.05],
    "probe.rho_floor": 0.05,
    "probe.min_log_growth": 0.02,
    "probe.band_fraction": 0.6,
    "probe.xi_min": 3.0,
    "output.dir": "out",
    "output.format": "csv+json",
}


class ConfigError(ValueError):
    """Malformed configuration; message carries the offending line."""


def _parse_scalar(text: str, lineno: int):
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    try:
        if any(c in text for c in ".eE") and not text.lstrip("+-").isdigit():
            return float(text)
        return int(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {text!r}")


def _parse_value(text: str, lineno: int):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"line {lineno}: unterminated list")
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, lineno) for part in inner.split(",")]
    return _parse_scalar(text, lineno)


def _coerce(key: str, value, default, lineno: int):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"line {lineno}: key {key} expects a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: key {key} expects an integer")
        if isinstance(value, float) and value != int(value):
            raise ConfigError(f"line {lineno}: key {key} expects an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: key {key} expects a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"line {lineno}: key {key} expects a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"line {lineno}: key {key} expects a list")
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(
                    f"line {lineno}: key {key} expects numbers in its list")
            out.append(float(item))
        return out
    raise ConfigError(f"line {lineno}: unsupported key {key}")  # pragma: no cover


def parse_config_text(text: str) -> dict:
    """Parse the dotted-key text into a fully-resolved config dict."""
    resolved = dict(DEFAULTS)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got "
                              f"{raw.strip()!r}")
        key, _, value_text = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        resolved[key] = _coerce(key, _parse_value(value_text, lineno),
                                DEFAULTS[key], lineno)
    return resolved


def load_config(path) -> dict:
    """Load a config file; a .json manifest re-loads its resolved config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        raw = payload.get("config", payload)
        resolved = dict(DEFAULTS)
        for key, value in raw.items():
            if key not in DEFAULTS:
                raise ConfigError(f"manifest key unknown: {key!r}")
            resolved[key] = _coerce(key, value, DEFAULTS[key], 0)
        return resolved
    return parse_config_text(path.read_text())


def dump_config_toml(config: dict) -> str:
    """Render a resolved config back to the flat text format."""
    lines = []
    for key in DEFAULTS:
        value = config[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, list):
            text = "[" + ", ".join(repr(float(v)) for v in value) + "]"
        elif isinstance(value, str):
            text = f'"{value}"'
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
