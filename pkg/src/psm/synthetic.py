"""Seeded synthetic chest-IMU streams built from minimum-jerk pose segments."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dynamics import BodyParams
from .signals import ImuSample, ypr_rotation

# Peak path speed (rad/s) of the minimum-jerk profile.
PROFILE_PEAK_SPEED = {"slow": 0.4, "medium": 0.8, "fast": 1.6}
# Peak of s'(tau) for s = 10 tau^3 - 15 tau^4 + 6 tau^5.
MIN_JERK_PEAK = 1.875
_FD_STEP = 1e-3
# Jitter fades in and out over this long so the synthetic acceleration stays bounded.
JITTER_RAMP_S = 0.25


@dataclass(frozen=True)
class Jitter:
    amplitude: float
    frequency: float


@dataclass(frozen=True)
class Segment:
    duration: float
    target: tuple[float, float, float]
    profile: str = "slow"
    jitter: Jitter | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if self.profile not in PROFILE_PEAK_SPEED:
            raise ValueError(f"profile must be one of {sorted(PROFILE_PEAK_SPEED)}")
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))
        if len(self.target) != 3:
            raise ValueError("target must be a 3-vector")

    @property
    def perturbed(self) -> bool:
        return self.jitter is not None


@dataclass(frozen=True)
class NoiseSpec:
    theta: float = 0.002
    rate: float = 0.01
    accel: float = 0.03


@dataclass(frozen=True)
class SyntheticScenario:
    segments: tuple[Segment, ...]
    seed: int = 0
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    name: str = "scenario"

    def validate(self, sample_rate: float) -> None:
        pose = np.array(self.start, dtype=float)
        for i, seg in enumerate(self.segments):
            if seg.jitter is not None and seg.jitter.frequency >= 0.5 * sample_rate:
                raise ValueError(f"segment {i}: jitter frequency at or above Nyquist")
            move = move_time(pose, seg)
            if move > seg.duration + 1e-12:
                raise ValueError(
                    f"segment {i}: motion needs {move:.3f} s at the {seg.profile} profile but lasts {seg.duration} s"
                )
            pose = np.array(seg.target)

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def segment_spans(self) -> list[tuple[float, float, Segment]]:
        spans, t0 = [], 0.0
        for seg in self.segments:
            spans.append((t0, t0 + seg.duration, seg))
            t0 += seg.duration
        return spans

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticScenario":
        allowed = {"segments", "seed", "start", "noise", "name"}
        if set(d) - allowed:
            raise ValueError(f"unknown scenario keys: {sorted(set(d) - allowed)}")
        segs = []
        for s in d["segments"]:
            s = dict(s)
            pert = s.pop("perturbation", "none")
            jitter = None
            if pert not in (None, "none"):
                if set(pert) != {"jitter"}:
                    raise ValueError(f"unknown perturbation {pert!r}")
                jitter = Jitter(**pert["jitter"])
            segs.append(Segment(duration=s.pop("duration"), target=s.pop("target"), profile=s.pop("profile", "slow"), jitter=jitter))
            if s:
                raise ValueError(f"unknown segment keys: {sorted(s)}")
        return cls(
            segments=tuple(segs),
            seed=int(d.get("seed", 0)),
            start=tuple(d.get("start", (0.0, 0.0, 0.0))),
            noise=NoiseSpec(**d.get("noise", {})),
            name=d.get("name", "scenario"),
        )

    def to_dict(self) -> dict:
        segs = []
        for s in self.segments:
            pert = "none" if s.jitter is None else {"jitter": {"amplitude": s.jitter.amplitude, "frequency": s.jitter.frequency}}
            segs.append({"duration": s.duration, "target": list(s.target), "profile": s.profile, "perturbation": pert})
        return {
            "name": self.name,
            "seed": self.seed,
            "start": list(self.start),
            "noise": {"theta": self.noise.theta, "rate": self.noise.rate, "accel": self.noise.accel},
            "segments": segs,
        }


def builtin_scenarios() -> list[str]:
    root = resources.files("psm") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str) -> SyntheticScenario:
    """Load a scenario from a JSON path or a built-in scenario name."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        res = resources.files("psm") / "data" / "scenarios" / f"{name_or_path}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no scenario file or built-in scenario named {name_or_path!r}")
        text = res.read_text()
    return SyntheticScenario.from_dict(json.loads(text))


def move_time(start, seg: Segment) -> float:
    dist = float(np.linalg.norm(np.asarray(seg.target) - np.asarray(start, dtype=float)))
    return MIN_JERK_PEAK * dist / PROFILE_PEAK_SPEED[seg.profile]


def _min_jerk(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tau = np.clip(tau, 0.0, 1.0)
    s = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)
    ds = 30.0 * tau**2 * (1.0 - tau) ** 2
    return s, ds


def pose_trajectory(scenario: SyntheticScenario, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free orientation and Euler-angle rates at times ``t``."""
    t = np.asarray(t, dtype=float)
    theta = np.tile(np.asarray(scenario.start, dtype=float), (t.size, 1))
    rate = np.zeros((t.size, 3))
    pose = np.asarray(scenario.start, dtype=float)
    for t0, t1, seg in scenario.segment_spans():
        last = seg is scenario.segments[-1]
        inside = (t >= t0) & ((t < t1) | (last & (t <= t1 + 1e-9)))
        after = t >= t1
        target = np.asarray(seg.target)
        move = move_time(pose, seg)
        if np.any(inside):
            local = t[inside] - t0
            if move > 0:
                s, ds = _min_jerk(local / move)
                theta[inside] = pose + np.outer(s, target - pose)
                rate[inside] = np.outer(ds / move, target - pose)
            else:
                theta[inside] = target
            if seg.jitter is not None:
                w = 2.0 * math.pi * seg.jitter.frequency
                a = seg.jitter.amplitude
                ramp = min(JITTER_RAMP_S, 0.5 * seg.duration)
                env_in, denv_in = _min_jerk(local / ramp)
                env_out, denv_out = _min_jerk((seg.duration - local) / ramp)
                env = env_in * env_out
                denv = (denv_in * env_out - env_in * denv_out) / ramp
                wave = a * env * np.sin(w * local)
                dwave = a * (denv * np.sin(w * local) + env * w * np.cos(w * local))
                theta[inside, 0] += wave
                theta[inside, 1] += wave
                rate[inside, 0] += dwave
                rate[inside, 1] += dwave
        theta[after & ~inside] = target
        pose = target
    return theta, rate


def chest_position(theta: np.ndarray, l_b: float) -> np.ndarray:
    """World position of the chest sensor on a torso of length ``l_b`` hinged at the waist."""
    return np.stack([l_b * ypr_rotation(q)[:, 2] for q in theta])


def generate_synthetic(scenario: SyntheticScenario, params: BodyParams, sample_rate: float) -> list[ImuSample]:
    """Sample the scenario at ``sample_rate``; deterministic for a given seed."""
    l_b, g = params.l_b, params.g
    scenario.validate(sample_rate)
    n = int(round(scenario.duration * sample_rate))
    t = np.arange(n) / sample_rate
    theta, rate = pose_trajectory(scenario, t)
    p_minus = chest_position(pose_trajectory(scenario, t - _FD_STEP)[0], l_b)
    p_zero = chest_position(theta, l_b)
    p_plus = chest_position(pose_trajectory(scenario, t + _FD_STEP)[0], l_b)
    acc_world = (p_plus - 2.0 * p_zero + p_minus) / _FD_STEP**2
    specific = acc_world + np.array([0.0, 0.0, g])

    rng = np.random.default_rng(scenario.seed)
    theta_noise = rng.normal(0.0, scenario.noise.theta, theta.shape)
    rate_noise = rng.normal(0.0, scenario.noise.rate, rate.shape)
    accel_noise = rng.normal(0.0, scenario.noise.accel, theta.shape)

    samples = []
    for i in range(n):
        R = ypr_rotation(theta[i])
        a_body = R.T @ specific[i] + accel_noise[i]
        still = not np.any(rate[i])
        samples.append(
            ImuSample(
                t=float(t[i]),
                theta_m=theta[i] + theta_noise[i],
                # a motionless sensor reports a bias-free zero rate
                theta_dot_m=rate[i] + (0.0 if still else rate_noise[i]),
                a_c=a_body,
            )
        )
    return samples


def frame_labels(scenario: SyntheticScenario, window_end_times: Sequence[float], window_s: float) -> list[bool | None]:
    """Expected "unsafe" label per window; ``None`` when a window straddles a perturbation boundary."""
    spans = scenario.segment_spans()
    labels = []
    for t_end in window_end_times:
        t_start = t_end - window_s
        hits = [seg.perturbed for t0, t1, seg in spans if t0 < t_end + 1e-9 and t1 > t_start + 1e-9]
        if all(hits):
            labels.append(True)
        elif not any(hits):
            labels.append(False)
        else:
            labels.append(None)
    return labels


def iter_segments_peak_speed(scenario: SyntheticScenario, sample_rate: float) -> Iterator[float]:
    spans = scenario.segment_spans()
    t = np.arange(int(round(scenario.duration * sample_rate))) / sample_rate
    _, rate = pose_trajectory(scenario, t)
    speed = np.linalg.norm(rate, axis=1)
    for t0, t1, _ in spans:
        sel = (t >= t0) & (t < t1)
        yield float(speed[sel].max()) if np.any(sel) else 0.0
