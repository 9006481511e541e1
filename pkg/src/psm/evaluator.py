"""Windowed frequency-domain scoring of the pendulum-vs-measurement deviation.

Spectral normalization (fixed, relied on by the default thresholds):

    X_k    = sum_j e_j exp(-2 pi i j k / N)           (numpy rfft)
    A_k    = 2 |X_k| / N   for 0 < k < N/2,   |X_k| / N  for k = 0, N/2
    E_m    = mean(A_k for lambda_m <= f_k <= lambda) / lambda

``A_k`` is the one-sided amplitude spectrum: a tone ``a sin(2 pi f t)``
sitting on bin ``k`` yields ``A_k = a``.  Over the two-sided spectrum,
``sum |X_k / N|^2 = (1 / N) sum e_j^2``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import WindowNotFull


class Level(str, enum.Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @property
    def rank(self) -> int:
        return {"High": 2, "Medium": 1, "Low": 0}[self.value]


@dataclass(frozen=True)
class EvalSpec:
    window_len: int = 64
    lambda_m: float = 0.5
    lambda_: float = 10.0
    eps_em: float = 0.022
    eps_ec: float = 0.035

    def __post_init__(self):
        n = self.window_len
        if int(n) != n or n < 4 or (int(n) & (int(n) - 1)):
            raise ValueError(f"window_len must be a power of two >= 4, got {n}")
        object.__setattr__(self, "window_len", int(n))
        if not 0.0 <= self.lambda_m < self.lambda_:
            raise ValueError("need 0 <= lambda_m < lambda")
        if not self.eps_em < self.eps_ec:
            raise ValueError("need eps_em < eps_ec")

    @property
    def hop(self) -> int:
        return self.window_len // 2

    def check_rate(self, sample_rate: float) -> None:
        if self.lambda_ > 0.5 * sample_rate:
            raise ValueError(f"lambda {self.lambda_} Hz exceeds Nyquist {0.5 * sample_rate} Hz")
        freqs = np.fft.rfftfreq(self.window_len, 1.0 / sample_rate)
        if not np.any((freqs >= self.lambda_m) & (freqs <= self.lambda_)):
            raise ValueError("frequency band contains no DFT bin")


def deviation(theta, theta_m, n_norm: float = 1.0) -> float:
    """``||theta - theta_m|| / n_norm**2``."""
    if n_norm < 1:
        raise ValueError("n_norm must be >= 1")
    d = np.asarray(theta, dtype=float) - np.asarray(theta_m, dtype=float)
    return math.sqrt(float(d @ d)) / (n_norm * n_norm)


def amplitude_spectrum(e_series, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(e_series, dtype=float)
    n = e.shape[0]
    X = np.fft.rfft(e)
    amp = np.abs(X) / n
    amp[1 : (n + 1) // 2] *= 2.0
    return np.fft.rfftfreq(n, 1.0 / sample_rate), amp


def spectral_score(e_series, spec: EvalSpec, sample_rate: float) -> float:
    e = np.asarray(e_series, dtype=float)
    if e.shape[0] < spec.window_len:
        raise WindowNotFull(f"window holds {e.shape[0]} of {spec.window_len} samples")
    e = e[-spec.window_len :]
    freqs, amp = amplitude_spectrum(e, sample_rate)
    band = (freqs >= spec.lambda_m) & (freqs <= spec.lambda_)
    if not np.any(band):
        raise ValueError("frequency band contains no DFT bin")
    return float(np.mean(amp[band])) / spec.lambda_


def classify(E_m_theta: float, E_m_omega: float, spec: EvalSpec) -> Level:
    score = max(E_m_theta, E_m_omega)
    if score <= spec.eps_em:
        return Level.HIGH
    if score <= spec.eps_ec:
        return Level.MEDIUM
    return Level.LOW


@dataclass(frozen=True)
class SafetyReport:
    t: float
    e_theta: float
    e_omega: float
    E_m_theta: float
    E_m_omega: float
    level: Level
    guard_flags: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "e_theta": self.e_theta,
            "e_omega": self.e_omega,
            "E_m_theta": self.E_m_theta,
            "E_m_omega": self.E_m_omega,
            "level": self.level.value,
            "guard_flags": list(self.guard_flags),
        }


class WindowEvaluator:
    """Rectangular windows with 50% overlap over the two deviation channels."""

    def __init__(self, spec: EvalSpec, sample_rate: float):
        spec.check_rate(sample_rate)
        self.spec = spec
        self.sample_rate = sample_rate
        self._theta: deque[float] = deque(maxlen=spec.window_len)
        self._omega: deque[float] = deque(maxlen=spec.window_len)
        self._flags: dict[str, None] = {}
        self._count = 0

    def push(self, t: float, e_theta: float, e_omega: float, flags=()) -> SafetyReport | None:
        self._theta.append(e_theta)
        self._omega.append(e_omega)
        for f in flags:
            self._flags.setdefault(f, None)
        self._count += 1
        n = self.spec.window_len
        if self._count < n or (self._count - n) % self.spec.hop:
            return None
        th = np.fromiter(self._theta, float, n)
        om = np.fromiter(self._omega, float, n)
        E_t = spectral_score(th, self.spec, self.sample_rate)
        E_w = spectral_score(om, self.spec, self.sample_rate)
        report = SafetyReport(
            t=t,
            e_theta=float(np.sqrt(np.mean(th * th))),
            e_omega=float(np.sqrt(np.mean(om * om))),
            E_m_theta=E_t,
            E_m_omega=E_w,
            level=classify(E_t, E_w, self.spec),
            guard_flags=tuple(sorted(self._flags)),
        )
        self._flags = {}
        return report
