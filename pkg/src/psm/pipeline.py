"""Streaming wiring: IMU sample -> preprocessing -> estimator -> pendulum -> window scores."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from . import dynamics as dyn
from .config import Config
from .dataset import SafetyDataset
from .evaluator import SafetyReport, WindowEvaluator
from .predictor import PredictorState, StepResult, StepSample, initial_pendulum, run_step
from .signals import GravityCalibrator, ImuSample, StreamingLowpass, force_direction


class Preprocessor:
    """Low-pass the acceleration, remove gravity and derive force and its direction.

    Before calibration completes the force is reported as zero and the
    sample carries the ``uncalibrated`` flag.
    """

    def __init__(self, config: Config):
        self.params = config.body
        self.eps_a = config.stream.eps_a
        self.lowpass = StreamingLowpass(config.filter, config.stream.filter_window)
        self.calibrator = GravityCalibrator(config.body.T, config.stream.calibration_s, config.stream.gyro_still)

    def push(self, sample: ImuSample) -> StepSample:
        flags = []
        a_m = self.lowpass.push(sample.a_c)
        if not self.lowpass.warm:
            flags.append("filter_warmup")
        self.calibrator.push(sample.theta_m, sample.theta_dot_m, a_m)
        if self.calibrator.calibrated:
            a_mg = self.calibrator.compensate(a_m, sample.theta_m)
        else:
            flags.append("uncalibrated")
            a_mg = np.zeros(3)
        phi, quiescent = force_direction(a_mg, self.eps_a)
        if quiescent:
            flags.append("quiescent")
        return StepSample(sample.t, sample.theta_m, sample.theta_dot_m, self.params.m_b * a_mg, phi, tuple(flags))


class Monitor:
    """Per-stream safety monitor; memory stays bounded by the filter and score windows."""

    def __init__(self, dataset: SafetyDataset, config: Config):
        config.eval.check_rate(config.sample_rate)
        self.dataset = dataset
        self.config = config
        self.pre = Preprocessor(config)
        self.evaluator = WindowEvaluator(config.eval, config.sample_rate)
        self.state = PredictorState()
        self.pendulum: dyn.PendulumState | None = None
        self.last: StepResult | None = None

    def step(self, sample: ImuSample) -> tuple[StepSample, StepResult, SafetyReport | None]:
        prepared = self.pre.push(sample)
        if self.pendulum is None:
            self.pendulum = initial_pendulum(prepared)
        result = run_step(self.state, self.pendulum, self.dataset, prepared, self.config.body, self.config.predictor)
        self.state, self.pendulum, self.last = result.predictor, result.pendulum, result
        report = self.evaluator.push(prepared.t, result.e_theta, result.e_omega, result.estimates.guards)
        return prepared, result, report

    def run(self, samples: Iterable[ImuSample]) -> Iterator[SafetyReport]:
        for sample in samples:
            _, _, report = self.step(sample)
            if report is not None:
                yield report
