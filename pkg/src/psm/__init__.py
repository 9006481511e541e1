"""Predictive safety monitoring of upper-body motion from a chest IMU."""

from .config import Config
from .dataset import GridSpec, SafetyDataset, build_dataset, gravity_angle
from .dynamics import BodyParams, PendulumState, integrate_step
from .evaluator import EvalSpec, Level, SafetyReport, WindowEvaluator
from .pipeline import Monitor
from .predictor import PredictorOptions, PredictorState, StepSample, run_step
from .signals import FilterSpec, ImuSample
from .synthetic import SyntheticScenario, generate_synthetic, load_scenario

__all__ = [
    "BodyParams",
    "Config",
    "EvalSpec",
    "FilterSpec",
    "GridSpec",
    "ImuSample",
    "Level",
    "Monitor",
    "PendulumState",
    "PredictorOptions",
    "PredictorState",
    "SafetyDataset",
    "SafetyReport",
    "StepSample",
    "SyntheticScenario",
    "WindowEvaluator",
    "build_dataset",
    "generate_synthetic",
    "gravity_angle",
    "integrate_step",
    "load_scenario",
    "run_step",
]
