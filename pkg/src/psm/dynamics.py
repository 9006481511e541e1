"""Spring-damper pendulum dynamics of the upper body.

The safety model is a 3-DoF pendulum (roll ``x``, pitch ``y``, yaw ``z``)
elastically coupled to the measured orientation ``theta_m``.  Its equation
of motion is

    M(theta) theta_ddot + H(theta, theta_dot) + G(theta) = tau

with

    E_T = 1/2 theta_dot^T M(theta) theta_dot
    V   = -m_b l_b g cos(theta_x) cos(theta_y) + 1/2 (theta - theta_m)^T K (theta - theta_m)
    D   = 1/2 (theta_dot - theta_dot_m)^T B (theta_dot - theta_dot_m)

``H`` collects the velocity-product terms of ``E_T`` together with the
spring and damper forces.  The velocity-product terms are formed from the
partial derivatives of ``M`` (Christoffel symbols of the first kind) so that
``M``, ``H`` and ``G`` are an exact Euler-Lagrange decomposition.

The bob distance ``l`` is carried in metres, i.e. scaled by ``l_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SingularMass, StateDiverged

__all__ = [
    "BodyParams",
    "PendulumState",
    "DynTerms",
    "LengthTerms",
    "StepInputs",
    "length_terms",
    "mass_matrix",
    "mass_matrix_partials",
    "bias_vector",
    "coriolis_vector",
    "cylinder_inertia",
    "gravity_vector",
    "dynamics_terms",
    "acceleration",
    "integrate_step",
    "kinetic_energy",
    "gravity_potential",
]

# |theta_x|, |theta_y| must stay below this for the upper-body workspace.
WORKSPACE_LIMIT = 0.5 * math.pi


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape == (1,):
        arr = np.repeat(arr, 3)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def cylinder_inertia(m_b: float, l_b: float, r_b: float) -> np.ndarray:
    """Principal inertia of a solid cylinder of mass ``m_b``, length ``l_b``, radius ``r_b``."""
    j_xy = m_b * (3.0 * r_b**2 + l_b**2) / 12.0
    j_z = 0.5 * m_b * r_b**2
    return np.array([j_xy, j_xy, j_z])


@dataclass(frozen=True)
class BodyParams:
    """Subject and sampling constants of the safety model.

    ``J_b`` defaults to the cylinder inertia of the torso.  Passing it
    explicitly is allowed; ``inertia_overridden`` then reports whether it
    departs from the geometric value.
    """

    m_b: float = 20.0
    l_b: float = 0.2
    r_b: float = 0.25
    K_c: np.ndarray = field(default_factory=lambda: np.array([500.0, 500.0, 1200.0]))
    B_c: np.ndarray = field(default_factory=lambda: np.array([40.0, 40.0, 60.0]))
    g: float = 9.8
    T: float = 0.01
    J_bs: float = 0.4
    J_b: np.ndarray | None = None

    def __post_init__(self):
        for name in ("m_b", "l_b", "r_b", "g", "J_bs"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
            object.__setattr__(self, name, value)
        T = float(self.T)
        if not (0.0 < T <= 1.0):
            raise ValueError(f"T must lie in (0, 1], got {T}")
        object.__setattr__(self, "T", T)
        for name in ("K_c", "B_c"):
            arr = _vec3(getattr(self, name), name)
            if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be strictly positive")
            object.__setattr__(self, name, arr)
        J_b = cylinder_inertia(self.m_b, self.l_b, self.r_b) if self.J_b is None else self.J_b
        J_b = _vec3(J_b, "J_b")
        if np.any(J_b <= 0.0):
            raise ValueError("J_b must be strictly positive")
        object.__setattr__(self, "J_b", J_b)

    @property
    def inertia_overridden(self) -> bool:
        geometric = cylinder_inertia(self.m_b, self.l_b, self.r_b)
        return not np.allclose(self.J_b, geometric, rtol=1e-12, atol=0.0)

    def with_(self, **changes) -> "BodyParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {
            "m_b": self.m_b,
            "l_b": self.l_b,
            "r_b": self.r_b,
            "K_c": self.K_c.tolist(),
            "B_c": self.B_c.tolist(),
            "g": self.g,
            "T": self.T,
            "J_bs": self.J_bs,
        }
        if self.inertia_overridden:
            out["J_b"] = self.J_b.tolist()
        return out


@dataclass(frozen=True)
class PendulumState:
    theta: np.ndarray
    theta_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", _vec3(self.theta, "theta"))
        object.__setattr__(self, "theta_dot", _vec3(self.theta_dot, "theta_dot"))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def at_rest(cls, theta=(0.0, 0.0, 0.0), t: float = 0.0) -> "PendulumState":
        return cls(np.asarray(theta, dtype=float), np.zeros(3), t)

    def in_workspace(self) -> bool:
        finite = np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.theta_dot))
        return bool(finite and abs(self.theta[0]) < WORKSPACE_LIMIT and abs(self.theta[1]) < WORKSPACE_LIMIT)


@dataclass(frozen=True)
class LengthTerms:
    l: float
    l_dot: float
    l_px: float
    l_py: float
    degenerate: bool = False


@dataclass(frozen=True)
class DynTerms:
    M: np.ndarray
    H: np.ndarray
    G: np.ndarray
    lengths: LengthTerms


@dataclass(frozen=True)
class StepInputs:
    """Inputs held constant over one integration period."""

    theta_m: np.ndarray
    theta_dot_m: np.ndarray
    K_hat: np.ndarray
    B_hat: np.ndarray
    tau_hat: np.ndarray

    def __post_init__(self):
        for name in ("theta_m", "theta_dot_m", "K_hat", "B_hat", "tau_hat"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))

    @classmethod
    def free(cls) -> "StepInputs":
        z = np.zeros(3)
        return cls(z, z, z, z, z)


def length_terms(theta, theta_dot, l_b: float) -> LengthTerms:
    """Bob distance from the yaw axis and its rate and angle partials.

    At the upright pose the distance is zero and its derivatives are 0/0;
    they are returned as zero and ``degenerate`` is set.
    """
    tx, ty = float(theta[0]), float(theta[1])
    dx, dy = float(theta_dot[0]), float(theta_dot[1])
    if not (math.isfinite(tx) and math.isfinite(ty)):
        raise ValueError("angles must be finite")
    sx, cx = math.sin(tx), math.cos(tx)
    sy, cy = math.sin(ty), math.cos(ty)
    s = math.sqrt(sy * sy * cx * cx + sx * sx)
    if s == 0.0:
        return LengthTerms(0.0, 0.0, 0.0, 0.0, True)
    px = 0.5 * math.sin(2.0 * tx) * cy * cy / s
    py = 0.5 * math.sin(2.0 * ty) * cx * cx / s
    return LengthTerms(l_b * s, l_b * (px * dx + py * dy), l_b * px, l_b * py, False)


def mass_matrix(theta, params: BodyParams) -> np.ndarray:
    tx, ty = float(theta[0]), float(theta[1])
    m, lb = params.m_b, params.l_b
    J = params.J_b
    sx, cx = math.sin(tx), math.cos(tx)
    sy, cy = math.sin(ty), math.cos(ty)
    l = lb * math.sqrt(sy * sy * cx * cx + sx * sx)
    m13 = -m * lb * l * cy * sx
    m23 = -m * lb * l * sy * cx
    return np.array(
        [
            [m * lb * lb + J[0], 0.0, m13],
            [0.0, m * lb * lb * cx * cx + J[1], m23],
            [m13, m23, m * l * l + J[2]],
        ]
    )


def mass_matrix_partials(theta, params: BodyParams) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dM/dtheta_x, dM/dtheta_y)``; ``M`` does not depend on yaw."""
    tx, ty = float(theta[0]), float(theta[1])
    m, lb = params.m_b, params.l_b
    lt = length_terms(theta, (0.0, 0.0, 0.0), lb)
    l, lx, ly = lt.l, lt.l_px, lt.l_py
    sx, cx = math.sin(tx), math.cos(tx)
    sy, cy = math.sin(ty), math.cos(ty)
    # d(l^2) written in closed form; smooth through the upright pose.
    dl2x = lb * lb * math.sin(2.0 * tx) * cy * cy
    dl2y = lb * lb * math.sin(2.0 * ty) * cx * cx

    dMx = np.zeros((3, 3))
    dMx[1, 1] = -m * lb * lb * math.sin(2.0 * tx)
    dMx[2, 2] = m * dl2x
    dMx[0, 2] = dMx[2, 0] = -m * lb * (lx * cy * sx + l * cy * cx)
    dMx[1, 2] = dMx[2, 1] = -m * lb * (lx * sy * cx - l * sy * sx)

    dMy = np.zeros((3, 3))
    dMy[2, 2] = m * dl2y
    dMy[0, 2] = dMy[2, 0] = -m * lb * (ly * cy * sx - l * sy * sx)
    dMy[1, 2] = dMy[2, 1] = -m * lb * (ly * sy * cx + l * cy * cx)
    return dMx, dMy


def coriolis_vector(theta, theta_dot, params: BodyParams) -> np.ndarray:
    """Velocity-product terms ``Mdot qdot - dE_T/dq``."""
    qd = np.asarray(theta_dot, dtype=float)
    dMx, dMy = mass_matrix_partials(theta, params)
    m_dot = dMx * qd[0] + dMy * qd[1]
    out = m_dot @ qd
    out[0] -= 0.5 * qd @ dMx @ qd
    out[1] -= 0.5 * qd @ dMy @ qd
    return out


def bias_vector(theta, theta_dot, theta_m, theta_dot_m, K_hat, B_hat, params: BodyParams) -> np.ndarray:
    K_hat = np.asarray(K_hat, dtype=float)
    B_hat = np.asarray(B_hat, dtype=float)
    if np.any(K_hat < 0.0) or np.any(B_hat < 0.0):
        raise ValueError("stiffness and damping must be nonnegative")
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    spring = K_hat * (theta - np.asarray(theta_m, dtype=float))
    damper = B_hat * (theta_dot - np.asarray(theta_dot_m, dtype=float))
    return coriolis_vector(theta, theta_dot, params) + spring + damper


def gravity_vector(theta, params: BodyParams) -> np.ndarray:
    tx, ty = float(theta[0]), float(theta[1])
    k = params.m_b * params.l_b * params.g
    return np.array([k * math.sin(tx) * math.cos(ty), k * math.cos(tx) * math.sin(ty), 0.0])


def dynamics_terms(theta, theta_dot, inputs: StepInputs, params: BodyParams) -> DynTerms:
    return DynTerms(
        M=mass_matrix(theta, params),
        H=bias_vector(theta, theta_dot, inputs.theta_m, inputs.theta_dot_m, inputs.K_hat, inputs.B_hat, params),
        G=gravity_vector(theta, params),
        lengths=length_terms(theta, theta_dot, params.l_b),
    )


def kinetic_energy(theta, theta_dot, params: BodyParams) -> float:
    qd = np.asarray(theta_dot, dtype=float)
    return float(0.5 * qd @ mass_matrix(theta, params) @ qd)


def gravity_potential(theta, params: BodyParams) -> float:
    """Potential whose gradient is :func:`gravity_vector`."""
    return -params.m_b * params.l_b * params.g * math.cos(float(theta[0])) * math.cos(float(theta[1]))


def acceleration(theta, theta_dot, inputs: StepInputs, params: BodyParams) -> np.ndarray:
    """Solve ``M theta_ddot = tau - H - G`` through a Cholesky factorization."""
    M = mass_matrix(theta, params)
    rhs = (
        inputs.tau_hat
        - bias_vector(theta, theta_dot, inputs.theta_m, inputs.theta_dot_m, inputs.K_hat, inputs.B_hat, params)
        - gravity_vector(theta, params)
    )
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMass(f"mass matrix not positive definite at theta={np.asarray(theta).tolist()}") from exc
    y = _forward(L, rhs)
    return _backward(L, y)


def _forward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y0 = b[0] / L[0, 0]
    y1 = (b[1] - L[1, 0] * y0) / L[1, 1]
    y2 = (b[2] - L[2, 0] * y0 - L[2, 1] * y1) / L[2, 2]
    return np.array([y0, y1, y2])


def _backward(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    x2 = y[2] / L[2, 2]
    x1 = (y[1] - L[2, 1] * x2) / L[1, 1]
    x0 = (y[0] - L[1, 0] * x1 - L[2, 0] * x2) / L[0, 0]
    return np.array([x0, x1, x2])


def integrate_step(
    state: PendulumState,
    inputs: StepInputs,
    params: BodyParams,
    dt: float | None = None,
    theta_bound: float = math.pi,
    rate_bound: float = 50.0,
) -> PendulumState:
    """Advance the pendulum by one period with classical RK4.

    Inputs are held constant over the step.  Raises :class:`StateDiverged`
    when the new state leaves ``|theta| <= theta_bound`` or
    ``|theta_dot| <= rate_bound``.
    """
    h = params.T if dt is None else float(dt)
    q, v = state.theta, state.theta_dot

    a1 = acceleration(q, v, inputs, params)
    q2, v2 = q + 0.5 * h * v, v + 0.5 * h * a1
    a2 = acceleration(q2, v2, inputs, params)
    q3, v3 = q + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = acceleration(q3, v3, inputs, params)
    q4, v4 = q + h * v3, v + h * a3
    a4 = acceleration(q4, v4, inputs, params)

    q_new = q + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
        raise StateDiverged(f"non-finite state at t={state.t + h:.6g}")
    if np.any(np.abs(q_new) > theta_bound) or np.any(np.abs(v_new) > rate_bound):
        raise StateDiverged(
            f"state out of bounds at t={state.t + h:.6g}: theta={q_new.tolist()}, theta_dot={v_new.tolist()}"
        )
    return PendulumState(q_new, v_new, state.t + h)
