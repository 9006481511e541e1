import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bob_length, euler_lagrange_residual, kinetic_energy_expr
from psm.dynamics import (
    BodyParams,
    PendulumState,
    StepInputs,
    bias_vector,
    gravity_potential,
    gravity_vector,
    integrate_step,
    kinetic_energy,
    length_terms,
    mass_matrix,
)
from psm.errors import SingularMass, StateDiverged

PARAMS = BodyParams()
angles = st.floats(-1.2, 1.2, allow_nan=False)


def test_table_one_inertia():
    assert PARAMS.J_b[0] == pytest.approx(20 * (3 * 0.0625 + 0.04) / 12)
    assert PARAMS.J_b[2] == pytest.approx(0.625)
    assert not PARAMS.inertia_overridden
    assert BodyParams(J_b=[1.0, 1.0, 1.0]).inertia_overridden


@pytest.mark.parametrize("bad", [{"m_b": 0.0}, {"T": 1.5}, {"T": 0.0}, {"K_c": [1, -1, 1]}, {"l_b": -0.2}])
def test_params_reject_invalid(bad):
    with pytest.raises(ValueError):
        BodyParams(**bad)


def test_length_terms_upright_is_degenerate():
    lt = length_terms([0, 0, 0], [0, 0, 0], 0.2)
    assert (lt.l, lt.l_dot, lt.l_px, lt.l_py) == (0.0, 0.0, 0.0, 0.0)
    assert lt.degenerate


def test_length_terms_horizontal_torso():
    lt = length_terms([0.0, math.pi / 2, 0.0], [0, 0, 0], 0.2)
    assert lt.l == pytest.approx(0.2, abs=1e-15)
    h = 1e-6
    fx = (bob_length([h, math.pi / 2, 0], 0.2) - bob_length([-h, math.pi / 2, 0], 0.2)) / (2 * h)
    fy = (bob_length([0, math.pi / 2 + h, 0], 0.2) - bob_length([0, math.pi / 2 - h, 0], 0.2)) / (2 * h)
    assert lt.l_px == pytest.approx(fx, abs=1e-6)
    assert lt.l_py == pytest.approx(fy, abs=1e-6)


def test_length_rate_matches_finite_difference():
    q = np.array([0.3, 0.4, 0.0])
    qd = np.array([0.1, -0.2, 0.0])
    T = 1e-5
    fd = (bob_length(q + T * qd, 0.2) - bob_length(q - T * qd, 0.2)) / (2 * T)
    assert length_terms(q, qd, 0.2).l_dot == pytest.approx(fd, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(angles, angles)
def test_length_partials_match_finite_differences(tx, ty):
    if abs(tx) < 1e-3 and abs(ty) < 1e-3:
        return
    h = 1e-7
    lt = length_terms([tx, ty, 0.0], [0, 0, 0], 0.2)
    fx = (bob_length([tx + h, ty, 0], 0.2) - bob_length([tx - h, ty, 0], 0.2)) / (2 * h)
    fy = (bob_length([tx, ty + h, 0], 0.2) - bob_length([tx, ty - h, 0], 0.2)) / (2 * h)
    assert abs(lt.l_px - fx) < 1e-6
    assert abs(lt.l_py - fy) < 1e-6


def test_mass_matrix_upright():
    M = mass_matrix([0, 0, 0], PARAMS)
    assert M[0, 0] == pytest.approx(20 * 0.04 + PARAMS.J_b[0])
    assert M[2, 2] == pytest.approx(0.625)
    assert M[0, 2] == 0.0 and M[1, 2] == 0.0 and M[0, 1] == 0.0


@pytest.mark.parametrize("ty", [-1.0, 0.2, 0.9])
def test_mass_matrix_m13_vanishes_without_roll(ty):
    assert mass_matrix([0.0, ty, 0.0], PARAMS)[0, 2] == 0.0


def test_mass_matrix_is_kinetic_energy_hessian():
    q = [0.3, 0.4, 0.1]
    h = 1e-3  # energy is quadratic in the rates, so central differences are exact up to rounding
    H = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            def f(di, dj):
                v = np.zeros(3)
                v[i] += di
                v[j] += dj
                return kinetic_energy_expr(q, v, PARAMS.m_b, PARAMS.l_b, PARAMS.J_b)
            H[i, j] = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    np.testing.assert_allclose(mass_matrix(q, PARAMS), H, rtol=1e-8, atol=1e-10)


def test_mass_matrix_symmetric_positive_definite_on_grid():
    grid = np.linspace(-1.2, 1.2, 50)
    for tx in grid:
        for ty in grid:
            M = mass_matrix([tx, ty, 0.0], PARAMS)
            assert np.array_equal(M, M.T)
            np.linalg.cholesky(M)


def test_bias_vector_vanishes_at_rest_on_target():
    q = np.array([0.2, -0.1, 0.3])
    H = bias_vector(q, np.zeros(3), q, np.zeros(3), [5, 6, 7], [1, 2, 3], PARAMS)
    np.testing.assert_array_equal(H, np.zeros(3))


def test_bias_vector_spring_only():
    q = np.array([0.2, -0.1, 0.3])
    qm = np.array([0.1, 0.1, -0.2])
    K = np.array([500.0, 400.0, 1200.0])
    H = bias_vector(q, np.zeros(3), qm, np.zeros(3), K, [40, 40, 60], PARAMS)
    np.testing.assert_allclose(H, K * (q - qm), rtol=0, atol=1e-12)


def test_bias_vector_rejects_negative_gains():
    with pytest.raises(ValueError):
        bias_vector(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), [-1, 0, 0], [0, 0, 0], PARAMS)


def test_euler_lagrange_residual_random_states():
    rng = np.random.default_rng(7)
    for _ in range(20):
        q = rng.uniform(-1.2, 1.2, 3)
        qd = rng.uniform(-2, 2, 3)
        qdd = rng.uniform(-5, 5, 3)
        qm = rng.uniform(-1, 1, 3)
        qdm = rng.uniform(-1, 1, 3)
        K = rng.uniform(0, 2000, 3)
        B = rng.uniform(0, 100, 3)
        ours = mass_matrix(q, PARAMS) @ qdd + bias_vector(q, qd, qm, qdm, K, B, PARAMS) + gravity_vector(q, PARAMS)
        ref = euler_lagrange_residual(q, qd, qdd, qm, qdm, K, B, PARAMS.m_b, PARAMS.l_b, PARAMS.g, PARAMS.J_b)
        np.testing.assert_allclose(ours, ref, rtol=1e-8, atol=1e-8 * np.max(np.abs(ref)))


def test_gravity_vector():
    np.testing.assert_array_equal(gravity_vector([0, 0, 0], PARAMS), np.zeros(3))
    G = gravity_vector([math.pi / 4, 0, 0], PARAMS)
    assert G[0] == pytest.approx(20 * 0.2 * 9.8 * math.sin(math.pi / 4))
    assert G[0] == pytest.approx(27.719, abs=1e-3)
    assert G[1] == 0.0


@given(angles, angles, st.floats(-3, 3))
def test_gravity_vector_has_no_yaw_component(tx, ty, tz):
    assert gravity_vector([tx, ty, tz], PARAMS)[2] == 0.0


def test_equilibrium_is_fixed_point():
    s = PendulumState.at_rest()
    s2 = integrate_step(s, StepInputs.free(), PARAMS)
    np.testing.assert_array_equal(s2.theta, np.zeros(3))
    np.testing.assert_array_equal(s2.theta_dot, np.zeros(3))
    assert s2.t == pytest.approx(0.01)


def _energy(s):
    return kinetic_energy(s.theta, s.theta_dot, PARAMS) + gravity_potential(s.theta, PARAMS)


def test_free_swing_conserves_energy():
    s = PendulumState.at_rest([0.1, 0.0, 0.0])
    e0 = _energy(s)
    free = StepInputs.free()
    for _ in range(1000):
        s = integrate_step(s, free, PARAMS)
    assert abs(_energy(s) - e0) / abs(e0) < 1e-6


def _forced_inputs(t):
    return StepInputs(
        theta_m=[0.3 * math.sin(t), 0.2 * math.cos(1.3 * t), 0.1 * t],
        theta_dot_m=[0.3 * math.cos(t), -0.26 * math.sin(1.3 * t), 0.1],
        K_hat=[50.0, 60.0, 40.0],
        B_hat=[2.0, 3.0, 1.0],
        tau_hat=[1.0, -0.5, 0.2],
    )


def _run(dt, t_end=1.0):
    s = PendulumState([0.1, -0.2, 0.05], [0.5, 0.0, -0.3])
    inputs = _forced_inputs(0.0)
    for _ in range(int(round(t_end / dt))):
        s = integrate_step(s, inputs, PARAMS, dt=dt)
    return np.concatenate([s.theta, s.theta_dot])


def test_rk4_convergence_order():
    ref = _run(1e-4)
    e1 = np.linalg.norm(_run(0.02) - ref)
    e2 = np.linalg.norm(_run(0.01) - ref)
    assert 12 <= e1 / e2 <= 20


def test_static_target_tracking():
    qm = np.array([0.3, -0.2, 0.4])
    inputs = StepInputs(qm, np.zeros(3), PARAMS.K_c, PARAMS.B_c, gravity_vector(qm, PARAMS))
    s = PendulumState.at_rest()
    for _ in range(1000):
        s = integrate_step(s, inputs, PARAMS)
    assert np.linalg.norm(s.theta - qm) < 1e-3


def test_divergence_is_reported():
    inputs = StepInputs(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), [0.0, 0.0, 1e6])
    with pytest.raises(StateDiverged):
        integrate_step(PendulumState.at_rest(), inputs, PARAMS)


def test_singular_mass_is_reported(monkeypatch):
    import psm.dynamics as dyn

    monkeypatch.setattr(dyn, "mass_matrix", lambda theta, params: np.zeros((3, 3)))
    with pytest.raises(SingularMass):
        integrate_step(PendulumState.at_rest(), StepInputs.free(), PARAMS)


def test_state_is_immutable():
    s = PendulumState.at_rest()
    with pytest.raises(ValueError):
        s.theta[0] = 1.0
