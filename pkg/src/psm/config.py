"""Single-file JSON configuration with strict key checking.

Schema (every section and key optional; omitted values take the defaults)::

    {
      "body":      {"m_b", "l_b", "r_b", "K_c", "B_c", "g", "T", "J_bs", "J_b"},
      "grid":      {"theta_g_min", "theta_g_max", "omega_max", "n_theta", "m_omega"},
      "filter":    {"n_f", "f_c"},
      "eval":      {"window_len", "lambda_m", "lambda_", "eps_em", "eps_ec"},
      "predictor": {"eps_p", "eps_den", "mode", "stability_margin", "n_norm",
                    "theta_bound", "rate_bound"},
      "stream":    {"filter_window", "calibration_s", "gyro_still", "eps_a"},
      "io":        {"dataset", "reports", "log"}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import GridSpec
from .dynamics import BodyParams
from .errors import ConfigError
from .evaluator import EvalSpec
from .predictor import PredictorOptions
from .signals import FilterSpec


@dataclass(frozen=True)
class StreamOptions:
    filter_window: int = 128
    calibration_s: float = 1.0
    gyro_still: float = 0.05
    eps_a: float = 0.05


@dataclass(frozen=True)
class IOPaths:
    dataset: str | None = None
    reports: str | None = None
    log: str | None = None


_SECTIONS = {
    "body": BodyParams,
    "grid": GridSpec,
    "filter": FilterSpec,
    "eval": EvalSpec,
    "predictor": PredictorOptions,
    "stream": StreamOptions,
    "io": IOPaths,
}


@dataclass(frozen=True)
class Config:
    body: BodyParams = field(default_factory=BodyParams)
    grid: GridSpec = field(default_factory=GridSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    eval: EvalSpec = field(default_factory=EvalSpec)
    predictor: PredictorOptions = field(default_factory=PredictorOptions)
    stream: StreamOptions = field(default_factory=StreamOptions)
    io: IOPaths = field(default_factory=IOPaths)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.body.T

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            section = getattr(self, name)
            if name == "body":
                out[name] = section.to_dict()
                continue
            out[name] = {f.name: _plain(getattr(section, f.name)) for f in dataclasses.fields(section)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name!r} section: {exc}") from exc
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Config":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def override(self, assignments: list[str]) -> "Config":
        """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
        data = self.to_dict()
        for item in assignments:
            key, sep, raw = item.partition("=")
            section, dot, name = key.partition(".")
            if not sep or not dot:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            if section not in data:
                raise ConfigError(f"unknown configuration section {section!r}")
            try:
                value: Any = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            data[section][name] = value
        return Config.from_dict(data)


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value
