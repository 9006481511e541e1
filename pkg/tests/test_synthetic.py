import numpy as np
import pytest

from psm.dynamics import BodyParams
from psm.signals import ypr_rotation
from psm.synthetic import (
    PROFILE_PEAK_SPEED,
    SyntheticScenario,
    builtin_scenarios,
    frame_labels,
    generate_synthetic,
    iter_segments_peak_speed,
    load_scenario,
)

PARAMS = BodyParams()
FS = 100.0


def _scenario(segments, seed=0, **kw):
    return SyntheticScenario.from_dict({"seed": seed, "segments": segments, **kw})


def test_stationary_segment_reads_gravity():
    pose = [0.1, 0.2, 0.3]
    sc = _scenario([{"duration": 1.0, "target": pose}], start=pose)
    samples = generate_synthetic(sc, PARAMS, FS)
    assert len(samples) == 100
    assert all(np.all(s.theta_dot_m == 0.0) for s in samples)
    gravity_body = ypr_rotation(pose).T @ np.array([0, 0, PARAMS.g])
    acc = np.array([s.a_c for s in samples])
    np.testing.assert_allclose(acc.mean(axis=0), gravity_body, atol=4 * 0.03 / 10)
    assert np.std(acc - gravity_body) == pytest.approx(0.03, rel=0.2)


def test_slow_peak_below_medium_peak():
    segs = [{"duration": 4.0, "target": [0.0, 0.5, 0.0], "profile": p} for p in ("slow", "medium")]
    slow = _scenario(segs[:1], noise={"theta": 0, "rate": 0, "accel": 0})
    medium = _scenario(segs[1:], noise={"theta": 0, "rate": 0, "accel": 0})
    peak_slow = next(iter_segments_peak_speed(slow, 1000.0))
    peak_medium = next(iter_segments_peak_speed(medium, 1000.0))
    assert peak_slow < peak_medium
    assert peak_slow == pytest.approx(PROFILE_PEAK_SPEED["slow"], rel=1e-4)
    assert peak_medium == pytest.approx(PROFILE_PEAK_SPEED["medium"], rel=1e-4)


def test_same_seed_same_stream_and_different_seed_differs():
    sc = load_scenario("eval_safe")
    a = generate_synthetic(sc, PARAMS, FS)
    b = generate_synthetic(sc, PARAMS, FS)
    assert [s.as_row() for s in a] == [s.as_row() for s in b]
    other = SyntheticScenario.from_dict({**sc.to_dict(), "seed": sc.seed + 1})
    c = generate_synthetic(other, PARAMS, FS)
    assert [s.as_row() for s in a] != [s.as_row() for s in c]


def test_acceleration_matches_pose_curvature():
    # noise-free swing: compare the body-frame reading with an analytic second derivative
    sc = _scenario(
        [{"duration": 3.0, "target": [0.0, 0.6, 0.0], "profile": "slow"}], noise={"theta": 0, "rate": 0, "accel": 0}
    )
    samples = generate_synthetic(sc, PARAMS, FS)
    theta = np.array([s.theta_m for s in samples])
    rates = np.array([s.theta_dot_m for s in samples])
    # rates agree with the numerical derivative of the pose
    np.testing.assert_allclose(np.gradient(theta[:, 1], 1 / FS)[2:-2], rates[2:-2, 1], atol=2e-3)
    # pure pitch: world acceleration of a point at l_b along the body z axis
    ty, w = theta[:, 1], rates[:, 1]
    alpha = np.gradient(w, 1 / FS)
    ax = PARAMS.l_b * (np.cos(ty) * alpha - np.sin(ty) * w * w)
    az = PARAMS.l_b * (-np.sin(ty) * alpha - np.cos(ty) * w * w)
    world = np.array([ypr_rotation(s.theta_m) @ s.a_c for s in samples])
    np.testing.assert_allclose(world[5:-5, 0], ax[5:-5], atol=1e-3)
    np.testing.assert_allclose(world[5:-5, 2], az[5:-5] + PARAMS.g, atol=1e-3)


def test_validation_errors():
    with pytest.raises(ValueError):
        _scenario([{"duration": 0.0, "target": [0, 0, 0]}])
    with pytest.raises(ValueError):
        _scenario([{"duration": 1.0, "target": [0, 0, 0], "profile": "warp"}])
    with pytest.raises(ValueError):
        _scenario([{"duration": 1.0, "target": [0, 0, 0], "colour": "red"}])
    fast_jitter = _scenario(
        [{"duration": 1.0, "target": [0, 0, 0], "perturbation": {"jitter": {"amplitude": 0.1, "frequency": 60.0}}}]
    )
    with pytest.raises(ValueError, match="Nyquist"):
        generate_synthetic(fast_jitter, PARAMS, FS)
    too_short = _scenario([{"duration": 0.5, "target": [0, 1.0, 0], "profile": "slow"}])
    with pytest.raises(ValueError, match="needs"):
        generate_synthetic(too_short, PARAMS, FS)


def test_scenario_dict_round_trip():
    for name in builtin_scenarios():
        sc = load_scenario(name)
        assert SyntheticScenario.from_dict(sc.to_dict()) == sc


def test_builtin_scenarios_are_valid():
    names = builtin_scenarios()
    assert {"train_slow_a", "train_medium_a", "eval_safe", "eval_jitter"} <= set(names)
    for name in names:
        load_scenario(name).validate(FS)


def test_frame_labels():
    sc = _scenario(
        [
            {"duration": 2.0, "target": [0, 0, 0]},
            {"duration": 2.0, "target": [0, 0, 0], "perturbation": {"jitter": {"amplitude": 0.1, "frequency": 4.0}}},
        ]
    )
    assert frame_labels(sc, [1.0, 2.3, 3.5], 0.64) == [False, None, True]
