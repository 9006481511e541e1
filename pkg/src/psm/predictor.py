"""Per-sample estimation of the pendulum's stiffness, damping and torque.

One call to :func:`run_step` consumes one preprocessed IMU sample:

1. reduce the measurement to ``(theta_g, omega)`` and look up ``P_k``;
2. extrapolate the pair one step and look up its probability;
3. pick the most probable cell of the 2x2 floor/ceil neighbourhood of the
   prediction as the safe target, or coast the previous safe target when the
   whole neighbourhood is below ``eps_p``;
4. estimate force, stiffness, damping and torque;
5. advance the pendulum one period and report its deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import dynamics as dyn
from .dataset import GridSpec, SafetyDataset, gravity_angle, omega_norm, value_of
from .errors import PSMError, StateDiverged
from .evaluator import deviation

PREDICTION_MODES = ("ahead", "printed")


@dataclass(frozen=True)
class PredictorOptions:
    """Tunables of the estimator.

    ``stability_margin`` bounds the estimated gains so that the explicit
    integrator stays inside its stability region:
    ``K <= lambda_min(M) * (margin / T)**2`` and ``B <= lambda_min(M) * margin / T``.
    ``None`` disables the ceiling.
    """

    eps_p: float = 0.02
    eps_den: float = 1e-3
    mode: str = "ahead"
    stability_margin: float | None = 2.0
    n_norm: float = 1.0
    theta_bound: float = math.pi
    rate_bound: float = 50.0

    def __post_init__(self):
        if not 0.0 <= self.eps_p < 1.0:
            raise ValueError("eps_p must lie in [0, 1)")
        if not self.eps_den > 0.0:
            raise ValueError("eps_den must be positive")
        if self.mode not in PREDICTION_MODES:
            raise ValueError(f"mode must be one of {PREDICTION_MODES}")
        if self.stability_margin is not None and not 0.0 < self.stability_margin <= 2.5:
            raise ValueError("stability_margin must lie in (0, 2.5]")
        if not self.n_norm >= 1.0:
            raise ValueError("n_norm must be >= 1")


@dataclass(frozen=True)
class PredictorState:
    prev: tuple[float, float] | None = None
    prev_safe: tuple[float, float] | None = None
    prev_safe_prob: float = 0.0
    k: int = 0


@dataclass(frozen=True)
class StepSample:
    """One preprocessed measurement: orientation, rate, body force and its direction."""

    t: float
    theta_m: np.ndarray
    theta_dot_m: np.ndarray
    F_m: np.ndarray
    phi: np.ndarray
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("theta_m", "theta_dot_m", "F_m", "phi"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "flags", tuple(self.flags))


class SafeCandidate(NamedTuple):
    P_safe: float
    theta_s: float
    omega_s: float
    fallback: bool
    cell: tuple[int, int] | None


class GainEstimate(NamedTuple):
    K_hat: np.ndarray
    B_hat: np.ndarray
    k_s: float
    b_s: float
    guards: tuple[str, ...]


@dataclass(frozen=True)
class EstimatedVars:
    K_hat: np.ndarray
    B_hat: np.ndarray
    tau_hat: np.ndarray
    F_hat: float
    theta_g: float
    omega: float
    P_k: float
    theta_g_tilde: float
    omega_tilde: float
    P_tilde: float
    P_safe: float
    theta_s: float
    omega_s: float
    theta_g_hat: float
    omega_hat: float
    fallback: bool
    guards: tuple[str, ...] = ()


@dataclass(frozen=True)
class StepResult:
    predictor: PredictorState
    pendulum: dyn.PendulumState
    estimates: EstimatedVars
    e_theta: float
    e_omega: float

    def to_record(self, sample: StepSample) -> dict:
        """Flat JSON-ready record of every intermediate of the step."""
        est = self.estimates
        return {
            "k": self.predictor.k - 1,
            "t": sample.t,
            "theta_g": est.theta_g,
            "omega": est.omega,
            "P_k": est.P_k,
            "theta_g_tilde": est.theta_g_tilde,
            "omega_tilde": est.omega_tilde,
            "P_tilde": est.P_tilde,
            "P_safe": est.P_safe,
            "theta_s": est.theta_s,
            "omega_s": est.omega_s,
            "fallback": est.fallback,
            "theta_g_hat": est.theta_g_hat,
            "omega_hat": est.omega_hat,
            "F_hat": est.F_hat,
            "K_hat": est.K_hat.tolist(),
            "B_hat": est.B_hat.tolist(),
            "tau_hat": est.tau_hat.tolist(),
            "theta": self.pendulum.theta.tolist(),
            "theta_dot": self.pendulum.theta_dot.tolist(),
            "e_theta": self.e_theta,
            "e_omega": self.e_omega,
            "guards": list(est.guards),
        }


def _clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def _clamp_index(i: int, size: int) -> int:
    return 0 if i < 0 else size - 1 if i > size - 1 else i


def predict_pair(state: PredictorState, theta_g_k: float, omega_k: float, mode: str = "ahead"):
    """Extrapolate ``(theta_g, omega)``; returns ``(theta_tilde, omega_tilde, d_theta, d_omega)``.

    ``printed`` applies the increment to the previous sample, which lands on
    the current one; ``ahead`` applies it to the current sample.
    """
    if state.prev is None:
        return theta_g_k, omega_k, 0.0, 0.0
    d_theta = theta_g_k - state.prev[0]
    d_omega = omega_k - state.prev[1]
    if mode == "printed":
        return state.prev[0] + d_theta, state.prev[1] + d_omega, d_theta, d_omega
    return theta_g_k + d_theta, omega_k + d_omega, d_theta, d_omega


def predicted_probability(
    dataset: SafetyDataset, theta_tilde: float, omega_tilde: float, d_theta: float, d_omega: float
) -> tuple[float, tuple[int, int]]:
    """Probability at the predicted cell, rounding up along increasing coordinates and down otherwise."""
    spec = dataset.spec
    nc = spec.theta_coord(theta_tilde)
    mc = spec.omega_coord(omega_tilde)
    n = math.ceil(nc) if d_theta > 0 else math.floor(nc)
    m = math.ceil(mc) if d_omega > 0 else math.floor(mc)
    n = _clamp_index(n, spec.n_theta)
    m = _clamp_index(m, spec.m_omega)
    return dataset.at(n, m), (n, m)


def neighbourhood(spec: GridSpec, theta_tilde: float, omega_tilde: float) -> tuple[tuple[int, int], tuple[int, int]]:
    """Floor/ceil row pair and column pair around the predicted point, clamped to the grid."""
    nc = spec.theta_coord(theta_tilde)
    mc = spec.omega_coord(omega_tilde)
    rows = (_clamp_index(math.floor(nc), spec.n_theta), _clamp_index(math.ceil(nc), spec.n_theta))
    cols = (_clamp_index(math.floor(mc), spec.m_omega), _clamp_index(math.ceil(mc), spec.m_omega))
    return rows, cols


def safe_candidate(
    dataset: SafetyDataset,
    theta_tilde: float,
    omega_tilde: float,
    state: PredictorState,
    d_theta: float,
    d_omega: float,
    eps_p: float,
    fallback_origin: tuple[float, float, float] | None = None,
) -> SafeCandidate:
    """Most probable cell of the 2x2 neighbourhood, or the coasted previous target.

    Ties go to the lower-omega column, then the lower-theta_g row.
    ``fallback_origin`` supplies ``(theta, omega, P)`` when no previous safe
    target exists yet.
    """
    spec = dataset.spec
    rows, cols = neighbourhood(spec, theta_tilde, omega_tilde)
    window = [(dataset.at(n, m), m, n) for n in rows for m in cols]
    if all(p <= eps_p for p, _, _ in window):
        if state.prev_safe is not None:
            base_t, base_w = state.prev_safe
            prob = state.prev_safe_prob
        elif fallback_origin is not None:
            base_t, base_w, prob = fallback_origin
        else:
            base_t, base_w, prob = theta_tilde, omega_tilde, max(p for p, _, _ in window)
        theta_s = _clip(base_t + d_theta, spec.theta_g_min, spec.theta_g_max)
        omega_s = _clip(base_w + d_omega, 0.0, spec.omega_max)
        return SafeCandidate(prob, theta_s, omega_s, True, None)
    best = max(window, key=lambda c: (c[0], -c[1], -c[2]))
    p, m, n = best
    theta_s, omega_s = value_of(n, m, spec)
    return SafeCandidate(p, theta_s, omega_s, False, (n, m))


def estimate_targets(theta_g_tilde, omega_tilde, theta_g_k, omega_k, theta_s, omega_s) -> tuple[float, float]:
    """Pull the predicted pair back by the measurement's excess over the safe target."""
    return theta_g_tilde - (theta_g_k - theta_s), omega_tilde - (omega_k - omega_s)


def safe_gravity_angle(candidate: SafeCandidate) -> float:
    """Gravity angle used by the force estimate; the safe target's angle."""
    return candidate.theta_s


def estimate_force(params: dyn.BodyParams, omega_hat: float, omega_s: float, theta_gs: float) -> float:
    """Reduced 1-DoF pendulum force: inertial term over one period plus gravity load."""
    inertia = params.J_bs + params.m_b * params.l_b**2
    return (
        inertia * (omega_hat - omega_s) / params.T + params.m_b * params.g * params.l_b * math.sin(theta_gs)
    ) / params.l_b


def _floor_magnitude(x: float, eps: float) -> tuple[float, bool]:
    if abs(x) >= eps:
        return x, False
    return (eps if x >= 0.0 else -eps), True


def estimate_gains(
    F_hat: float, theta_g_hat: float, omega_hat: float, P_k: float, params: dyn.BodyParams, eps_den: float = 1e-3
) -> GainEstimate:
    guards = []
    den_t, hit = _floor_magnitude(theta_g_hat, eps_den)
    if hit:
        guards.append("den_theta")
    den_w, hit = _floor_magnitude(omega_hat, eps_den)
    if hit:
        guards.append("den_omega")
    q = 1.0 - P_k
    k_s = F_hat / den_t / (q * q)
    b_s = F_hat / den_w * 2.0 / (q * q * q)
    if k_s < 0.0:
        k_s = 0.0
        guards.append("k_negative")
    if b_s < 0.0:
        b_s = 0.0
        guards.append("b_negative")
    return GainEstimate(params.K_c + k_s, params.B_c + b_s, k_s, b_s, tuple(guards))


def gain_ceiling(theta, params: dyn.BodyParams, margin: float) -> tuple[float, float]:
    """Largest stiffness and damping the RK4 step tolerates at this pose."""
    lam = float(np.linalg.eigvalsh(dyn.mass_matrix(theta, params))[0])
    rate = margin / params.T
    return lam * rate * rate, lam * rate


def estimate_torque(F_m, theta_m, F_hat: float, phi, params: dyn.BodyParams) -> np.ndarray:
    base = params.l_b * np.asarray(F_m, dtype=float) + dyn.gravity_vector(theta_m, params)
    return base + (base - params.l_b * F_hat * np.tan(np.asarray(phi, dtype=float)))


def initial_pendulum(sample: StepSample) -> dyn.PendulumState:
    return dyn.PendulumState(sample.theta_m, sample.theta_dot_m, sample.t)


def run_step(
    state: PredictorState,
    pendulum: dyn.PendulumState,
    dataset: SafetyDataset,
    sample: StepSample,
    params: dyn.BodyParams,
    options: PredictorOptions = PredictorOptions(),
) -> StepResult:
    """One pass of the estimation loop; pure in all of its arguments."""
    spec = dataset.spec
    guards = list(sample.flags)

    theta_g = gravity_angle(sample.theta_m[0], sample.theta_m[1], params.l_b)
    omega, clipped = omega_norm(sample.theta_dot_m, spec.omega_max)
    if clipped:
        guards.append("omega_clipped")
    P_k = dataset.lookup(theta_g, omega)

    theta_t, omega_t, d_theta, d_omega = predict_pair(state, theta_g, omega, options.mode)
    P_tilde, _ = predicted_probability(dataset, theta_t, omega_t, d_theta, d_omega)
    cand = safe_candidate(
        dataset, theta_t, omega_t, state, d_theta, d_omega, options.eps_p, fallback_origin=(theta_g, omega, P_k)
    )

    theta_hat, omega_hat = estimate_targets(theta_t, omega_t, theta_g, omega, cand.theta_s, cand.omega_s)
    F_hat = estimate_force(params, omega_hat, cand.omega_s, safe_gravity_angle(cand))
    gains = estimate_gains(F_hat, theta_hat, omega_hat, P_k, params, options.eps_den)
    guards.extend(gains.guards)
    K_hat, B_hat = gains.K_hat, gains.B_hat
    if options.stability_margin is not None:
        # evaluated at the measured pose so the estimates depend only on measurement and dataset
        k_max, b_max = gain_ceiling(sample.theta_m, params, options.stability_margin)
        if np.any(K_hat > k_max):
            K_hat = np.minimum(K_hat, k_max)
            guards.append("k_ceiling")
        if np.any(B_hat > b_max):
            B_hat = np.minimum(B_hat, b_max)
            guards.append("b_ceiling")
    tau_hat = estimate_torque(sample.F_m, sample.theta_m, F_hat, sample.phi, params)

    e_theta = deviation(pendulum.theta, sample.theta_m, options.n_norm)
    e_omega = deviation(pendulum.theta_dot, sample.theta_dot_m, options.n_norm)

    inputs = dyn.StepInputs(sample.theta_m, sample.theta_dot_m, K_hat, B_hat, tau_hat)
    try:
        new_pendulum = dyn.integrate_step(
            pendulum, inputs, params, theta_bound=options.theta_bound, rate_bound=options.rate_bound
        )
    except PSMError as exc:
        raise type(exc)(f"step {state.k} (t={sample.t:.6g}): {exc}") from exc
    if not new_pendulum.in_workspace():
        raise StateDiverged(f"step {state.k} (t={sample.t:.6g}): pendulum left the upper-body workspace")

    estimates = EstimatedVars(
        K_hat=K_hat,
        B_hat=B_hat,
        tau_hat=tau_hat,
        F_hat=F_hat,
        theta_g=theta_g,
        omega=omega,
        P_k=P_k,
        theta_g_tilde=theta_t,
        omega_tilde=omega_t,
        P_tilde=P_tilde,
        P_safe=cand.P_safe,
        theta_s=cand.theta_s,
        omega_s=cand.omega_s,
        theta_g_hat=theta_hat,
        omega_hat=omega_hat,
        fallback=cand.fallback,
        guards=tuple(guards),
    )
    new_state = PredictorState(
        prev=(theta_g, omega),
        prev_safe=(cand.theta_s, cand.omega_s),
        prev_safe_prob=cand.P_safe,
        k=state.k + 1,
    )
    return StepResult(new_state, new_pendulum, estimates, e_theta, e_omega)
