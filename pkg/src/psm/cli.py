"""``psm`` command line: build-dataset, evaluate, simulate, trace."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from collections import Counter
from pathlib import Path

from .config import Config
from .dataset import GridSpec, SafetyDataset, build_dataset
from .errors import ConfigError, PSMError
from .evaluator import Level, SafetyReport
from .files import JsonLinesWriter, read_imu_csv, read_json_lines, write_imu_csv
from .pipeline import Monitor
from .predictor import PredictorState, StepSample, initial_pendulum, run_step
from .synthetic import SyntheticScenario, frame_labels, generate_synthetic, load_scenario


def _build_time() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return "unspecified"
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(epoch)))


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if args.set:
        cfg = cfg.override(args.set)
    return cfg


def _dataset_path(args, cfg: Config) -> str:
    path = getattr(args, "dataset", None) or cfg.io.dataset
    if not path:
        raise ConfigError("no dataset given (use --dataset or io.dataset in the config)")
    return path


# --- evaluation summary -----------------------------------------------------


@dataclasses.dataclass
class Summary:
    frames: int = 0
    levels: Counter = dataclasses.field(default_factory=Counter)
    safe_frames: int = 0
    safe_high: int = 0
    perturbed_frames: int = 0
    perturbed_non_high: int = 0
    ambiguous_frames: int = 0

    def add(self, report: SafetyReport, label: bool | None | str = "none") -> None:
        self.frames += 1
        self.levels[report.level.value] += 1
        if label == "none":
            return
        if label is None:
            self.ambiguous_frames += 1
        elif label:
            self.perturbed_frames += 1
            self.perturbed_non_high += report.level is not Level.HIGH
        else:
            self.safe_frames += 1
            self.safe_high += report.level is Level.HIGH

    def to_dict(self) -> dict:
        out = {
            "frames": self.frames,
            "levels": {lv.value: self.levels.get(lv.value, 0) for lv in Level},
            "fraction_high": self.levels.get("High", 0) / self.frames if self.frames else None,
        }
        labelled = self.safe_frames + self.perturbed_frames
        if labelled or self.ambiguous_frames:
            out["labels"] = {
                "safe_frames": self.safe_frames,
                "safe_high": self.safe_high,
                "safe_high_fraction": self.safe_high / self.safe_frames if self.safe_frames else None,
                "perturbed_frames": self.perturbed_frames,
                "perturbed_non_high": self.perturbed_non_high,
                "perturbed_non_high_fraction": (
                    self.perturbed_non_high / self.perturbed_frames if self.perturbed_frames else None
                ),
                "ambiguous_frames": self.ambiguous_frames,
                "success": (self.safe_high + self.perturbed_non_high) / labelled if labelled else None,
            }
        return out

    def table(self) -> str:
        d = self.to_dict()
        lines = ["level    frames  share"]
        for lv in Level:
            n = d["levels"][lv.value]
            share = n / self.frames if self.frames else 0.0
            lines.append(f"{lv.value:<8} {n:>6}  {share:6.1%}")
        lines.append(f"{'total':<8} {self.frames:>6}")
        lab = d.get("labels")
        if lab:
            def pct(x):
                return "n/a" if x is None else f"{x:.1%}"
            lines.append(f"safe frames classified High:          {lab['safe_high']}/{lab['safe_frames']} ({pct(lab['safe_high_fraction'])})")
            lines.append(
                f"perturbed frames classified non-High: {lab['perturbed_non_high']}/{lab['perturbed_frames']} "
                f"({pct(lab['perturbed_non_high_fraction'])})"
            )
            lines.append(f"success (label match):               {pct(lab['success'])}")
        return "\n".join(lines)


def _plot(reports_path: str, cfg: Config, out: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = read_json_lines(reports_path)
    plt.rcParams["svg.hashsalt"] = "psm"
    fig, ax = plt.subplots(figsize=(8, 3.5))
    t = [r["t"] for r in records]
    ax.plot(t, [r["E_m_theta"] for r in records], label="E_m theta")
    ax.plot(t, [r["E_m_omega"] for r in records], label="E_m omega")
    ax.axhline(cfg.eval.eps_em, color="tab:orange", linestyle="--", linewidth=1, label="medium threshold")
    ax.axhline(cfg.eval.eps_ec, color="tab:red", linestyle="--", linewidth=1, label="critical threshold")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("band-mean spectral score")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def _evaluate_stream(samples, dataset, cfg: Config, reports_out, scenario: SyntheticScenario | None) -> Summary:
    summary = Summary()
    window_s = cfg.eval.window_len / cfg.sample_rate
    monitor = Monitor(dataset, cfg)
    with JsonLinesWriter(reports_out) as writer:
        for report in monitor.run(samples):
            label = "none"
            if scenario is not None:
                label = frame_labels(scenario, [report.t], window_s)[0]
            summary.add(report, label)
            writer.write(report.to_record())
    return summary


def _finish_evaluation(args, cfg: Config, summary: Summary, reports_path) -> None:
    print(summary.table())
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.plot:
        if not reports_path:
            raise ConfigError("--plot needs a report file (--out)")
        _plot(reports_path, cfg, args.plot)


# --- commands -----------------------------------------------------------------


def cmd_build_dataset(args) -> int:
    cfg = _load_config(args)
    spec = cfg.grid
    if args.spec:
        try:
            spec = GridSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except ValueError as exc:
            raise ConfigError(f"{args.spec}: {exc}") from exc
    out = args.out or cfg.io.dataset
    if not out:
        raise ConfigError("no output path given (use --out)")
    recordings = [list(read_imu_csv(p)) for p in args.recordings]
    ids = [Path(p).name for p in args.recordings]
    ds = build_dataset(recordings, spec, cfg.body.l_b, smooth=not args.no_smooth, recording_ids=ids, build_time=_build_time())
    ds.save(out)
    print(f"dataset: {ds.meta['samples']} samples from {len(recordings)} recordings -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    dataset = SafetyDataset.load(_dataset_path(args, cfg))
    scenario = _scenario_arg(args)
    reports = args.out or cfg.io.reports
    summary = _evaluate_stream(read_imu_csv(args.input), dataset, cfg, reports, scenario)
    _finish_evaluation(args, cfg, summary, reports)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    scenario = _scenario_arg(args)
    samples = generate_synthetic(scenario, cfg.body, cfg.sample_rate)
    if args.out:
        write_imu_csv(args.out, samples)
    if args.dataset or cfg.io.dataset:
        dataset = SafetyDataset.load(_dataset_path(args, cfg))
        reports = args.reports or cfg.io.reports
        summary = _evaluate_stream(samples, dataset, cfg, reports, scenario)
        _finish_evaluation(args, cfg, summary, reports)
    elif not args.out:
        raise ConfigError("simulate needs --out, --dataset, or both")
    else:
        print(f"{len(samples)} samples -> {args.out}")
    return 0


def _read_step_samples(path) -> list[StepSample]:
    keys = {"t", "theta_m", "theta_dot_m", "F_m", "phi"}
    out = []
    for i, rec in enumerate(read_json_lines(path)):
        if set(rec) - keys - {"flags"} or keys - set(rec):
            raise ValueError(f"{path}: line {i + 1} must have keys {sorted(keys)}")
        out.append(StepSample(**rec))
    return out


def cmd_trace(args) -> int:
    """Per-step dump of every estimator intermediate.

    ``.jsonl`` input holds already-preprocessed steps (``t, theta_m,
    theta_dot_m, F_m, phi``) and bypasses filtering and calibration; CSV
    input runs the full preprocessing chain.
    """
    cfg = _load_config(args)
    dataset = SafetyDataset.load(_dataset_path(args, cfg))
    out = args.out or cfg.io.log
    limit = args.steps
    with JsonLinesWriter(out) as writer:
        if str(args.input).endswith(".jsonl"):
            steps = _read_step_samples(args.input)[:limit]
            state, pendulum = PredictorState(), None
            for sample in steps:
                if pendulum is None:
                    pendulum = initial_pendulum(sample)
                result = run_step(state, pendulum, dataset, sample, cfg.body, cfg.predictor)
                state, pendulum = result.predictor, result.pendulum
                writer.write(result.to_record(sample))
        else:
            monitor = Monitor(dataset, cfg)
            for i, sample in enumerate(read_imu_csv(args.input)):
                if limit is not None and i >= limit:
                    break
                prepared, result, _ = monitor.step(sample)
                writer.write(result.to_record(prepared))
    return 0


def _scenario_arg(args) -> SyntheticScenario | None:
    name = getattr(args, "scenario", None)
    if name is None:
        return None
    scenario = load_scenario(name)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    return scenario


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--seed", type=int, help="override the scenario noise seed")
    common.add_argument("--out", help="primary output file")

    parser = argparse.ArgumentParser(prog="psm", description="Predictive safety monitor for upper-body motion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", parents=[common], help="histogram IMU recordings into a probability grid")
    p.add_argument("--spec", help="grid spec JSON (defaults to the config's grid section)")
    p.add_argument("--no-smooth", action="store_true", help="skip the 3x3 box blur")
    p.add_argument("recordings", nargs="+", help="IMU CSV files")
    p.set_defaults(func=cmd_build_dataset)

    def evaluation_flags(p):
        p.add_argument("--dataset", help="dataset JSON")
        p.add_argument("--summary", help="write the summary as JSON here")
        p.add_argument("--plot", help="write an SVG of the score traces here")

    p = sub.add_parser("evaluate", parents=[common], help="score an IMU CSV stream; --out receives report JSONL")
    evaluation_flags(p)
    p.add_argument("--scenario", help="scenario whose labels define the success metric")
    p.add_argument("input", help="IMU CSV file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic stream (--out CSV) and optionally score it")
    evaluation_flags(p)
    p.add_argument("--scenario", required=True, help="scenario JSON path or built-in name")
    p.add_argument("--reports", help="report JSONL output when scoring")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", parents=[common], help="per-step estimator log (--out JSONL)")
    p.add_argument("--dataset", help="dataset JSON")
    p.add_argument("--steps", type=int, help="stop after this many samples")
    p.add_argument("input", help="IMU CSV, or JSONL of preprocessed steps")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PSMError, ValueError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
