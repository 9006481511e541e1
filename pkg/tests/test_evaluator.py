import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psm.errors import WindowNotFull
from psm.evaluator import (
    EvalSpec,
    Level,
    WindowEvaluator,
    amplitude_spectrum,
    classify,
    deviation,
    spectral_score,
)

SPEC = EvalSpec()
FS = 100.0


def _tone(amplitude, freq, n=SPEC.window_len, fs=FS):
    return amplitude * np.sin(2 * math.pi * freq * np.arange(n) / fs)


def test_deviation_examples():
    assert deviation([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 0.0
    assert deviation([3, 4, 0], [0, 0, 0], 1) == 5.0
    assert deviation([3, 4, 0], [0, 0, 0], 2) == pytest.approx(5.0 / 4)
    with pytest.raises(ValueError):
        deviation([0, 0, 0], [0, 0, 0], 0.5)


def test_zero_window_scores_zero():
    assert spectral_score(np.zeros(64), SPEC, FS) == 0.0


def test_window_not_full():
    with pytest.raises(WindowNotFull):
        spectral_score(np.zeros(10), SPEC, FS)


def test_bin_centred_tone_golden_constant():
    # bin 4 of a 64-point window at 100 Hz sits at 6.25 Hz; the band holds bins 1..6
    f = 4 * FS / 64
    score = spectral_score(_tone(0.3, f), SPEC, FS)
    band_bins = 6
    assert score == pytest.approx(0.3 / band_bins / SPEC.lambda_, rel=1e-12)


def test_tone_score_is_linear_in_amplitude():
    f = 4 * FS / 64
    a = spectral_score(_tone(0.1, f), SPEC, FS)
    b = spectral_score(_tone(0.2, f), SPEC, FS)
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_tone_above_band_is_masked():
    # bin 20 = 31.25 Hz, above the 10 Hz band edge
    f = 20 * FS / 64
    assert spectral_score(_tone(1.0, f), SPEC, FS) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=64, max_size=64))
def test_parseval(values):
    e = np.array(values)
    X = np.fft.fft(e)
    assert np.sum(np.abs(X / e.size) ** 2) == pytest.approx(np.sum(e * e) / e.size, rel=1e-9, abs=1e-12)
    # one-sided amplitudes fold the mirror bins back in
    _, amp = amplitude_spectrum(e, FS)
    n = e.size
    folded = amp[0] ** 2 + amp[n // 2] ** 2 + 0.5 * np.sum(amp[1 : n // 2] ** 2)
    assert folded == pytest.approx(np.sum(e * e) / n, rel=1e-9, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=64, max_size=64))
def test_sign_flip_invariance(values):
    e = np.array(values)
    assert spectral_score(e, SPEC, FS) == pytest.approx(spectral_score(-e, SPEC, FS), rel=1e-12, abs=1e-15)


def test_classify_examples():
    assert classify(0.0, 0.0, SPEC) is Level.HIGH
    assert classify(0.03, 0.01, SPEC) is Level.MEDIUM
    assert classify(0.01, 0.05, SPEC) is Level.LOW
    assert classify(0.022, 0.0, SPEC) is Level.HIGH
    assert classify(0.035, 0.0, SPEC) is Level.MEDIUM


@given(st.floats(0, 0.1), st.floats(0, 0.1), st.floats(0, 0.05), st.floats(0, 0.05))
def test_classify_is_monotone(a, b, da, db):
    assert classify(a + da, b + db, SPEC).rank <= classify(a, b, SPEC).rank


def test_spec_validation():
    with pytest.raises(ValueError):
        EvalSpec(window_len=48)
    with pytest.raises(ValueError):
        EvalSpec(lambda_m=5.0, lambda_=5.0)
    with pytest.raises(ValueError):
        EvalSpec(eps_em=0.04)
    with pytest.raises(ValueError):
        EvalSpec(lambda_=80.0).check_rate(100.0)


def test_windows_overlap_by_half():
    ev = WindowEvaluator(SPEC, FS)
    times = []
    for k in range(64 * 4):
        r = ev.push(k / FS, 0.0, 0.0)
        if r is not None:
            times.append(k)
    assert times == [63 + 32 * i for i in range(len(times))]
    assert len(times) == 7


def test_overlapping_scores_bounded_by_unshared_half():
    rng = np.random.default_rng(3)
    e = np.cumsum(rng.normal(0, 0.01, 64 * 6))
    e += 0.05 * np.sin(2 * math.pi * 3.0 * np.arange(e.size) / FS)
    ev = WindowEvaluator(SPEC, FS)
    reports = [(k, r) for k, v in enumerate(e) if (r := ev.push(k / FS, v, 0.0)) is not None]
    n = SPEC.window_len
    for (k0, r0), (k1, r1) in zip(reports, reports[1:]):
        old = e[k0 - n + 1 : k0 - n + 1 + SPEC.hop]
        new = e[k1 - SPEC.hop + 1 : k1 + 1]
        # every band amplitude moves by at most 2/N times the l1 change
        bound = 2.0 / n * (np.abs(old).sum() + np.abs(new).sum()) / SPEC.lambda_
        assert abs(r1.E_m_theta - r0.E_m_theta) <= bound + 1e-15


def test_report_fields_and_flags():
    ev = WindowEvaluator(SPEC, FS)
    report = None
    for k in range(64):
        report = ev.push(k / FS, 0.1, 0.2, flags=("den_omega",) if k == 3 else ())
    assert report.e_theta == pytest.approx(0.1)
    assert report.e_omega == pytest.approx(0.2)
    assert report.guard_flags == ("den_omega",)
    assert report.level is Level.HIGH
    rec = report.to_record()
    assert rec["level"] == "High"
    # flags reset after each report
    for k in range(64, 96):
        report = ev.push(k / FS, 0.1, 0.2)
    assert report.guard_flags == ()
