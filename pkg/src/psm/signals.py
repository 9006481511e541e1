"""IMU preprocessing: zero-phase low-pass, gravity compensation, force direction."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import NotCalibrated, SeriesTooShort

ACCEL_SANITY_LIMIT = 160.0  # m/s^2, 16 g sensor range
QUIESCENCE_THRESHOLD = 0.05  # m/s^2


@dataclass(frozen=True)
class ImuSample:
    t: float
    theta_m: np.ndarray
    theta_dot_m: np.ndarray
    a_c: np.ndarray

    def __post_init__(self):
        for name in ("theta_m", "theta_dot_m", "a_c"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))
        if not all(np.all(np.isfinite(getattr(self, n))) for n in ("theta_m", "theta_dot_m", "a_c")):
            raise ValueError(f"non-finite IMU sample at t={self.t}")
        if np.linalg.norm(self.a_c) >= ACCEL_SANITY_LIMIT:
            raise ValueError(f"acceleration beyond sensor range at t={self.t}")

    def as_row(self) -> list[float]:
        return [self.t, *self.theta_m.tolist(), *self.theta_dot_m.tolist(), *self.a_c.tolist()]


@dataclass(frozen=True)
class FilterSpec:
    """Low-pass settings; ``n_f`` is the net order of the forward-backward pair."""

    n_f: int = 12
    f_c: float = 0.42

    def __post_init__(self):
        if int(self.n_f) != self.n_f or self.n_f <= 0 or self.n_f % 2:
            raise ValueError(f"n_f must be a positive even integer, got {self.n_f}")
        if not (0.0 < self.f_c < 1.0):
            raise ValueError(f"f_c must lie in (0, 1), got {self.f_c}")
        object.__setattr__(self, "n_f", int(self.n_f))
        object.__setattr__(self, "f_c", float(self.f_c))

    @property
    def pass_order(self) -> int:
        return self.n_f // 2

    @property
    def padlen(self) -> int:
        return 3 * self.n_f

    def design(self) -> np.ndarray:
        """Second-order sections of one filtering pass."""
        return sps.butter(self.pass_order, self.f_c, btype="low", output="sos")


def zero_phase_lowpass(series, spec: FilterSpec) -> np.ndarray:
    """Forward-backward Butterworth along axis 0 with odd reflection padding."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n < spec.padlen:
        raise SeriesTooShort(f"need at least {spec.padlen} samples, got {n}")
    # scipy requires the series to be strictly longer than the padding
    padlen = min(spec.padlen, n - 1)
    return sps.sosfiltfilt(spec.design(), x, axis=0, padtype="odd", padlen=padlen)


class StreamingLowpass:
    """Sliding-window zero-phase filter emitting the newest filtered sample.

    Until the window holds ``spec.padlen`` samples the raw value is passed
    through and ``warm`` stays False.
    """

    def __init__(self, spec: FilterSpec, window: int = 128):
        if window < spec.padlen:
            raise ValueError(f"window {window} shorter than filter padding {spec.padlen}")
        self.spec = spec
        self.window = window
        self._sos = spec.design()
        # steady-state initial conditions, shape (sections, 2, 1) to broadcast over the 3 axes
        self._zi = sps.sosfilt_zi(self._sos)[:, :, None]
        self._buf: deque[np.ndarray] = deque(maxlen=window)

    @property
    def warm(self) -> bool:
        return len(self._buf) >= self.spec.padlen

    def push(self, value) -> np.ndarray:
        v = np.asarray(value, dtype=float)
        self._buf.append(v)
        if not self.warm:
            return v.copy()
        x = np.array(self._buf)
        padlen = min(self.spec.padlen, len(x) - 1)
        # same steps as sosfiltfilt(padtype="odd"), reusing the cached initial conditions
        ext = np.concatenate(
            (2.0 * x[0] - x[padlen:0:-1], x, 2.0 * x[-1] - x[-2 : -padlen - 2 : -1]), axis=0
        )
        y, _ = sps.sosfilt(self._sos, ext, axis=0, zi=self._zi * ext[0])
        y = y[::-1]
        y, _ = sps.sosfilt(self._sos, y, axis=0, zi=self._zi * y[0])
        return y[::-1][padlen + len(x) - 1]


def ypr_rotation(theta_m) -> np.ndarray:
    """``R = R_z(yaw) R_y(pitch) R_x(roll)`` for ``theta_m = (roll, pitch, yaw)``."""
    rx, ry, rz = (float(a) for a in theta_m)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    return np.array(
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    )


def _check_rotation(R: np.ndarray, name: str) -> None:
    if R.shape != (3, 3) or np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-6:
        raise ValueError(f"{name} is not orthonormal")


def gravity_compensate(a_m, R_t, a_g, R_t0) -> np.ndarray:
    """World-frame acceleration with the calibrated gravity reference removed."""
    if a_g is None or R_t0 is None:
        raise NotCalibrated("no stillness window has produced a gravity reference")
    R_t = np.asarray(R_t, dtype=float)
    R_t0 = np.asarray(R_t0, dtype=float)
    _check_rotation(R_t, "R_t")
    _check_rotation(R_t0, "R_t0")
    return R_t @ np.asarray(a_m, dtype=float) - R_t0 @ np.asarray(a_g, dtype=float)


def force_direction(a_mg, eps_a: float = QUIESCENCE_THRESHOLD) -> tuple[np.ndarray, bool]:
    """Per-axis direction angles of the exerted force; returns ``(phi, quiescent)``."""
    a = np.asarray(a_mg, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm < eps_a:
        return np.zeros(3), True
    return np.arctan2(a, norm), False


class GravityCalibrator:
    """Collects the first ``duration`` seconds of still samples into ``a_g``.

    A sample counts as still when its gyro norm is below ``gyro_threshold``.
    ``R_t0`` is the orientation of the first still sample.
    """

    def __init__(self, T: float, duration: float = 1.0, gyro_threshold: float = 0.05):
        self.needed = max(1, int(round(duration / T)))
        self.gyro_threshold = gyro_threshold
        self._sum = np.zeros(3)
        self._count = 0
        self.a_g: np.ndarray | None = None
        self.R_t0: np.ndarray | None = None

    @property
    def calibrated(self) -> bool:
        return self.a_g is not None

    def push(self, theta_m, theta_dot_m, a_m) -> bool:
        if self.calibrated:
            return True
        if np.linalg.norm(theta_dot_m) >= self.gyro_threshold:
            return False
        if self._count == 0:
            self._R_first = ypr_rotation(theta_m)
        self._sum += np.asarray(a_m, dtype=float)
        self._count += 1
        if self._count >= self.needed:
            self.a_g = self._sum / self._count
            self.R_t0 = self._R_first
        return self.calibrated

    def compensate(self, a_m, theta_m) -> np.ndarray:
        return gravity_compensate(a_m, ypr_rotation(theta_m), self.a_g, self.R_t0)
