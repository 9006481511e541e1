"""Readers and writers for IMU CSV streams and JSON-lines record files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Iterator

from .signals import ImuSample

CSV_HEADER = ("t", "theta_mx", "theta_my", "theta_mz", "gx", "gy", "gz", "ax", "ay", "az")


def format_float(x: float) -> str:
    """Shortest round-tripping decimal form, so files are identical across platforms."""
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return repr(float(x))


def write_imu_csv(path, samples: Iterable[ImuSample]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for s in samples:
            fh.write(",".join(format_float(v) for v in s.as_row()) + "\n")
            n += 1
    return n


def read_imu_csv(path) -> Iterator[ImuSample]:
    """Stream samples from a CSV file; a header row is required and checked."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        prev_t = -math.inf
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            try:
                v = [float(x) for x in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if v[0] <= prev_t:
                raise ValueError(f"{path}:{lineno}: timestamps must increase")
            prev_t = v[0]
            try:
                yield ImuSample(v[0], v[1:4], v[4:7], v[7:10])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None


class JsonLinesWriter:
    """Append one sorted-key JSON object per line; ``None`` path discards output."""

    def __init__(self, path):
        self._fh = open(path, "w") if path is not None else None

    def write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_json_lines(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
