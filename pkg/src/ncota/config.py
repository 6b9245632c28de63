"""Experiment configuration: sectioned key-value text with physical units.

Values are kept as the strings written in the file so that a parsed config
serializes back to the same content; typed access goes through the schema,
which reports violations with the file line they come from.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

CHOICES = {
    ("run", "algorithm"): ("ncota", "qdgd-lpq", "qdgd-vq", "local"),
    ("network", "label_mode"): ("iid", "spatial"),
    ("channel", "kind"): ("iid-rayleigh", "block-fading", "static", "reflector-multipath"),
    ("channel", "model"): ("rayleigh", "reflector"),
    ("channel", "fading"): ("iid", "block", "static"),
    ("channel", "gains"): ("uniform", "friis"),
    ("channel", "lambda_method"): ("exact", "monte-carlo"),
    ("problem", "kind"): ("linreg", "classification"),
    ("algorithm", "schedule"): ("decreasing", "constant"),
}

# (section, key) -> (type, default). Types: int, float, bool, choice, str,
# auto-float ("auto" or a number), batch ("full", "auto" or an integer) and
# physical quantities (frequency, time, length, power, psd).
SCHEMA = {
    "run": {
        "algorithm": ("choice", "ncota"),
        "trials": ("int", "20"),
        "iterations": ("int", "1000"),
        "seed": ("int", "0"),
        "stride": ("int", "50"),
        "pin_deployment": ("bool", "false"),
        "workers": ("int", "1"),
    },
    "network": {
        "nodes": ("int", "10"),
        "area_radius": ("length", "2km"),
        "label_mode": ("choice", "iid"),
    },
    "channel": {
        "kind": ("choice", "iid-rayleigh"),
        "model": ("choice", "rayleigh"),
        "fading": ("choice", "iid"),
        "gains": ("choice", "uniform"),
        "gain_low": ("float", "0.1"),
        "gain_high": ("float", "1.0"),
        "carrier": ("frequency", "3GHz"),
        "bandwidth": ("frequency", "5MHz"),
        "coherence": ("time", "2ms"),
        "lambda_method": ("choice", "exact"),
        "lambda_budget": ("int", "2000"),
    },
    "frame": {
        "symbols": ("int", "2"),
        "subcarriers": ("int", "512"),
        "cyclic_prefix": ("int", "133"),
    },
    "radio": {
        "tx_power": ("power", ""),
        "noise_psd": ("psd", ""),
        "energy": ("float", "1.0"),
        "noise": ("float", "0.0"),
    },
    "problem": {
        "kind": ("choice", "linreg"),
        "dimension": ("int", "5"),
        "mu": ("auto-float", "auto"),
        "L": ("float", "4.0"),
        "heterogeneity": ("float", "1.0"),
        "noise": ("float", "0.1"),
        "samples_per_class": ("int", "100"),
        "test_per_class": ("int", "50"),
        "feature_file": ("str", ""),
        "test_file": ("str", ""),
        "batch": ("batch", "full"),
        "gradient_time": ("time", "30us"),
    },
    "algorithm": {
        "p_tx": ("auto-float", "auto"),
        "theta": ("auto-float", "auto"),
        "varpi": ("auto-float", "auto"),
        "phi": ("float", "0.0"),
        "shifts": ("bool", "true"),
        "schedule": ("choice", "decreasing"),
        "eta0": ("auto-float", "auto"),
        "gamma0": ("auto-float", "auto"),
        "delta": ("auto-float", "auto"),
        "bits": ("int", "4"),
        "repetitions": ("int", "10"),
        "subcarriers_per_node": ("int", "512"),
    },
}

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9}
_UNITS = {
    "frequency": {"hz": "Hz"},
    "time": {"s": "s"},
    "length": {"m": "m"},
    "power": {"w": "W"},
    "psd": {"w/hz": "W/Hz"},
}
_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"


class ConfigError(ValueError):
    """Schema violation, located at ``path:line``."""


def parse_quantity(text: str, kind: str) -> float:
    """Convert ``text`` with an optional unit to SI.

    dB forms are accepted for power (``dBm``, ``dBW``) and spectral density
    (``dBm/Hz``, ``dBW/Hz``). A bare number is taken as SI.
    """
    m = re.fullmatch(_NUM + r"\s*(\S*)", text.strip())
    if m is None:
        raise ValueError(f"cannot read a number from {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if unit == "":
        return value
    if kind in ("power", "psd"):
        db = re.fullmatch(r"dB(m|W)(/Hz)?", unit)
        if db is not None:
            if (db.group(2) is None) != (kind == "power"):
                raise ValueError(f"unit {unit!r} does not fit a {kind}")
            ref = 1e-3 if db.group(1) == "m" else 1.0
            return ref * 10.0 ** (value / 10.0)
    for base in _UNITS[kind]:
        for p, scale in _PREFIX.items():
            if unit.lower() == (p + base).lower() and (p.lower() != "m" or unit[0] == p):
                return value * scale
    raise ValueError(f"unknown {kind} unit {unit!r}")


def _parse_value(kind: str, text: str, section: str, key: str):
    t = text.strip()
    if kind == "int":
        return int(t)
    if kind == "float":
        return float(t)
    if kind == "bool":
        low = t.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {t!r}")
    if kind == "choice":
        allowed = CHOICES[(section, key)]
        if t not in allowed:
            raise ValueError(f"expected one of {allowed}, got {t!r}")
        return t
    if kind == "str":
        return t
    if kind == "auto-float":
        return None if t == "auto" else float(t)
    if kind == "batch":
        return t if t in ("full", "auto") else int(t)
    if t == "":
        return None
    return parse_quantity(t, kind)


@dataclass
class ExperimentConfig:
    """Raw sectioned values plus the source file for error locations."""

    raw: dict = field(default_factory=dict)
    path: str = "<config>"
    lines: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        kind, default = SCHEMA[section][key]
        text = self.raw.get(section, {}).get(key, default)
        try:
            return _parse_value(kind, text, section, key)
        except ValueError as exc:
            where = self.lines.get((section, key))
            loc = f"{self.path}:{where}" if where else self.path
            raise ConfigError(f"{loc}: [{section}] {key}: {exc}") from None

    def set(self, section: str, key: str, value) -> "ExperimentConfig":
        """Copy with one value replaced (validated)."""
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown parameter {section}.{key}")
        raw = {s: dict(v) for s, v in self.raw.items()}
        raw.setdefault(section, {})[key] = str(value)
        out = ExperimentConfig(raw, self.path, dict(self.lines))
        out.lines.pop((section, key), None)
        out.get(section, key)
        return out

    def to_text(self) -> str:
        parts = []
        for section, values in self.raw.items():
            parts.append(f"[{section}]")
            parts.extend(f"{k} = {v}" for k, v in values.items())
            parts.append("")
        return "\n".join(parts)

    def validate(self) -> "ExperimentConfig":
        for section, values in self.raw.items():
            for key in values:
                self.get(section, key)
        return self


def _locate(text: str):
    """Map (section, key) and section headers to 1-based line numbers."""
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where.setdefault((section, None), n)
        elif section is not None and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            where.setdefault((section, key), n)
    return where


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        loc = f"{path}:{lineno}" if lineno else path
        raise ConfigError(f"{loc}: {exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _locate(text)
    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{lines.get((section, None), '?')}: unknown section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{lines.get((section, key), '?')}: "
                                  f"unknown key {key!r} in [{section}]")
            raw[section][key] = value
    return ExperimentConfig(raw, path, lines).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def to_db(value: float, ref: float = 1e-3) -> float:
    return 10.0 * math.log10(value / ref) if value > 0 else -math.inf
