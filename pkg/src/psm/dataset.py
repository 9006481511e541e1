"""Reduced-dimension safety dataset: a probability grid over (theta_g, omega).

Rows index the torso-to-gravity angle ``theta_g``, columns the angular speed
``omega``.  Grid point ``(n, m)`` sits at

    theta_g = (theta_g_max - theta_g_min) * n / n_theta + theta_g_min
    omega   = omega_max * m / m_omega
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyRecordings, IndexOutOfGrid
from .signals import ImuSample

DATASET_VERSION = 1
P_MAX = 0.99


@dataclass(frozen=True)
class GridSpec:
    theta_g_min: float = -1.0
    theta_g_max: float = 0.5 * math.pi
    omega_max: float = 2.5
    n_theta: int = 33
    m_omega: int = 33

    def __post_init__(self):
        if not self.theta_g_min < self.theta_g_max:
            raise ValueError("theta_g_min must be below theta_g_max")
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        for name in ("n_theta", "m_omega"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise ValueError(f"{name} must be an integer >= 2")
            object.__setattr__(self, name, int(value))
        for name in ("theta_g_min", "theta_g_max", "omega_max"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def theta_span(self) -> float:
        return self.theta_g_max - self.theta_g_min

    @property
    def eps_theta(self) -> float:
        return 1.0 / self.n_theta

    @property
    def eps_omega(self) -> float:
        return 1.0 / self.m_omega

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.m_omega)

    def theta_coord(self, theta_g: float) -> float:
        """Continuous row coordinate of ``theta_g``."""
        return self.n_theta * (theta_g - self.theta_g_min) / self.theta_span

    def omega_coord(self, omega: float) -> float:
        return self.m_omega * omega / self.omega_max

    def to_dict(self) -> dict:
        return {
            "theta_g_min": self.theta_g_min,
            "theta_g_max": self.theta_g_max,
            "omega_max": self.omega_max,
            "n_theta": self.n_theta,
            "m_omega": self.m_omega,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        unknown = set(d) - {"theta_g_min", "theta_g_max", "omega_max", "n_theta", "m_omega"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**d)


class GridIndex(NamedTuple):
    n: int
    m: int
    clamped: bool = False


def _gravity_angle_raw(theta_x: float, theta_y: float, l_b: float) -> float:
    """Piecewise torso-to-gravity angle without workspace checks."""
    cx, cy = math.cos(theta_x), math.cos(theta_y)
    sx, sy = math.sin(theta_x), math.sin(theta_y)
    h = l_b * (1.0 - cx * cy)
    l = l_b * math.sqrt(sy * sy * cx * cx + sx * sx)
    a_c = math.hypot(h, l)
    if a_c < 1e-9:
        return 0.0
    if h <= l_b:
        return math.pi - 2.0 * math.acos(min(1.0, h / a_c))
    return 0.5 * math.pi - math.asin(max(-1.0, min(1.0, (h - l_b) / l_b)))


def gravity_angle(theta_x: float, theta_y: float, l_b: float) -> float:
    if abs(theta_x) >= 0.5 * math.pi or abs(theta_y) >= 0.5 * math.pi:
        raise ValueError(f"tilt outside the upper-body workspace: ({theta_x}, {theta_y})")
    return _gravity_angle_raw(float(theta_x), float(theta_y), l_b)


def omega_norm(theta_dot_m, omega_max: float) -> tuple[float, bool]:
    """Angular speed clipped to ``[0, omega_max]``; returns ``(omega, clipped)``."""
    w = float(np.linalg.norm(np.asarray(theta_dot_m, dtype=float)))
    if w > omega_max:
        return omega_max, True
    return w, False


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def bin_of(theta_g: float, omega: float, spec: GridSpec) -> GridIndex:
    n = _round_half_up(spec.theta_coord(theta_g))
    m = _round_half_up(spec.omega_coord(omega))
    nc = min(max(n, 0), spec.n_theta - 1)
    mc = min(max(m, 0), spec.m_omega - 1)
    return GridIndex(nc, mc, (nc, mc) != (n, m))


def value_of(n: int, m: int, spec: GridSpec) -> tuple[float, float]:
    if not (0 <= n < spec.n_theta and 0 <= m < spec.m_omega):
        raise IndexOutOfGrid(f"({n}, {m}) outside {spec.shape} grid")
    return spec.theta_span * n / spec.n_theta + spec.theta_g_min, spec.omega_max * m / spec.m_omega


@dataclass(frozen=True)
class SafetyDataset:
    spec: GridSpec
    P: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        counts = np.array(self.counts, dtype=np.int64)
        if P.shape != self.spec.shape or counts.shape != self.spec.shape:
            raise ValueError(f"grid arrays must have shape {self.spec.shape}")
        if np.any(P < 0.0) or np.any(P > P_MAX) or not np.all(np.isfinite(P)):
            raise ValueError(f"probabilities must lie in [0, {P_MAX}]")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        P.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "counts", counts)

    def at(self, n: int, m: int) -> float:
        return float(self.P[n, m])

    def lookup(self, theta_g: float, omega: float) -> float:
        idx = bin_of(theta_g, omega, self.spec)
        return float(self.P[idx.n, idx.m])

    def to_dict(self) -> dict:
        return {
            "version": DATASET_VERSION,
            "spec": self.spec.to_dict(),
            "P": self.P.tolist(),
            "counts": self.counts.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SafetyDataset":
        if d.get("version") != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {d.get('version')!r}")
        return cls(GridSpec.from_dict(d["spec"]), d["P"], d["counts"], d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SafetyDataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


def lookup(dataset: SafetyDataset, theta_g: float, omega: float) -> float:
    return dataset.lookup(theta_g, omega)


def reduce_samples(samples: Iterable[ImuSample], spec: GridSpec, l_b: float) -> tuple[np.ndarray, int]:
    """Visit counts of a sample stream; out-of-workspace samples are skipped and counted."""
    counts = np.zeros(spec.shape, dtype=np.int64)
    skipped = 0
    for s in samples:
        tx, ty = s.theta_m[0], s.theta_m[1]
        if abs(tx) >= 0.5 * math.pi or abs(ty) >= 0.5 * math.pi:
            skipped += 1
            continue
        w, _ = omega_norm(s.theta_dot_m, spec.omega_max)
        idx = bin_of(gravity_angle(tx, ty, l_b), w, spec)
        counts[idx.n, idx.m] += 1
    return counts, skipped


def probabilities_from_counts(counts: np.ndarray, smooth: bool = True) -> np.ndarray:
    """Max-normalized visit frequencies, optionally box-blurred over 3x3 cells, capped at ``P_MAX``."""
    field_ = counts.astype(float)
    if smooth:
        field_ = ndimage.uniform_filter(field_, size=3, mode="constant", cval=0.0)
        field_[field_ < 1e-12 * max(field_.max(), 1.0)] = 0.0
    peak = field_.max()
    if peak <= 0:
        return np.zeros_like(field_)
    return np.minimum(field_ / peak, P_MAX)


def build_dataset(
    recordings: Sequence[Iterable[ImuSample]],
    spec: GridSpec,
    l_b: float,
    smooth: bool = True,
    recording_ids: Sequence[str] | None = None,
    build_time: str | None = None,
) -> SafetyDataset:
    """Histogram every recorded ``(theta_g, omega)`` pair into a probability grid."""
    if not recordings:
        raise EmptyRecordings("no recordings supplied")
    counts = np.zeros(spec.shape, dtype=np.int64)
    skipped = 0
    for rec in recordings:
        c, k = reduce_samples(rec, spec, l_b)
        counts += c
        skipped += k
    if counts.sum() == 0:
        raise EmptyRecordings("recordings contain no usable samples")
    meta = {
        "recordings": list(recording_ids) if recording_ids is not None else [],
        "samples": int(counts.sum()),
        "skipped": skipped,
        "smoothed": smooth,
        "built": build_time if build_time is not None else time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    return SafetyDataset(spec, probabilities_from_counts(counts, smooth), counts, meta)
