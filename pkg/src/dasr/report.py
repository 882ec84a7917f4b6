"""Run configuration and benchmark report plumbing.

Reports are written twice, as JSON lines and as CSV, carrying the same
numbers; the JSONL form additionally holds the config echo, pooled patch
aggregates, and timing. Timing lives in its own record so that two runs with
identical configs and seeds produce identical reports except for it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError

DEFAULT_BINS = (45.0, 37.5, 32.5, 27.5)


@dataclass
class RunConfig:
    """Flat bag of every knob a command can consume, echoed into reports."""

    scale: int = 2
    hr_dir: str = ""
    input: str = ""
    output_dir: str = "out"
    store_path: str = ""
    dim_checkpoint: str = ""
    cb_checkpoint: str = ""
    bins: tuple = DEFAULT_BINS
    seed: int = 0
    mode: str = ""
    margin: int = 0
    antialias: bool = True
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-4
    channels: int = 32
    blocks: int = 4
    limit: int | None = None
    augment: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3, or 4, got {self.scale}")
        bins = tuple(float(b) for b in self.bins)
        if len(bins) != 4 or any(bins[i] <= bins[i + 1] for i in range(3)):
            raise ConfigError(f"bins must be 4 strictly descending values, got {bins}")
        self.bins = bins
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(
                f"epochs and batch_size must be >= 1, got {self.epochs} and {self.batch_size}"
            )
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.channels < 1 or self.blocks < 0:
            raise ConfigError(
                f"invalid network size: channels={self.channels} blocks={self.blocks}"
            )
        if self.limit is not None and self.limit < 1:
            raise ConfigError(f"limit must be >= 1 or omitted, got {self.limit}")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def override(self, scale=None, mode=None, seed=None) -> "RunConfig":
        if scale is not None:
            self.scale = int(scale)
        if mode is not None:
            self.mode = str(mode)
        if seed is not None:
            self.seed = int(seed)
        self.validate()
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bins"] = list(self.bins)
        return out


def _numeric_keys(row: dict) -> list[str]:
    return [k for k, v in row.items() if isinstance(v, (int, float)) and not isinstance(v, bool)]


def mean_of_rows(rows: list[dict]) -> dict:
    """Arithmetic mean of every numeric field across rows."""
    if not rows:
        raise DimensionError("cannot take the mean of zero report rows")
    keys = _numeric_keys(rows[0])
    return {k: float(np.mean([row[k] for row in rows])) for k in keys}


@dataclass
class BenchmarkReport:
    """Per-image rows plus their mean, pooled aggregates, and a config echo."""

    dataset: str
    scale: int
    mode: str
    rows: list[dict]
    mean_row: dict
    aggregates: dict = field(default_factory=dict)
    seconds_per_frame: float = 0.0
    config: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, dataset, scale, mode, rows, aggregates=None,
                  seconds_per_frame=0.0, config=None) -> "BenchmarkReport":
        return cls(dataset=dataset, scale=scale, mode=mode, rows=list(rows),
                   mean_row=mean_of_rows(rows), aggregates=dict(aggregates or {}),
                   seconds_per_frame=float(seconds_per_frame), config=dict(config or {}))

    def verify(self, tol: float = 1e-9) -> "BenchmarkReport":
        """Assert the mean row matches the arithmetic mean of the rows."""
        recomputed = mean_of_rows(self.rows)
        for key, value in recomputed.items():
            if abs(self.mean_row.get(key, np.nan) - value) > tol:
                raise DimensionError(
                    f"mean row field {key} is {self.mean_row.get(key)}, "
                    f"rows average to {value}"
                )
        return self

    def jsonl_records(self) -> list[dict]:
        records = [{"type": "header", "dataset": self.dataset, "scale": self.scale,
                    "mode": self.mode, "config": self.config}]
        records += [{"type": "row", **row} for row in self.rows]
        records.append({"type": "mean", **self.mean_row})
        if self.aggregates:
            records.append({"type": "aggregate", **self.aggregates})
        records.append({"type": "timing", "seconds_per_frame": self.seconds_per_frame})
        return records

    def write(self, stem) -> tuple[Path, Path]:
        """Write <stem>.jsonl and <stem>.csv; returns both paths."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        jsonl_path = stem.with_suffix(".jsonl")
        csv_path = stem.with_suffix(".csv")
        with open(jsonl_path, "w", encoding="utf-8") as fh:
            for record in self.jsonl_records():
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        keys = _numeric_keys(self.rows[0]) if self.rows else []
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["file"] + keys)
            for row in self.rows:
                writer.writerow([row["file"]] + [repr(float(row[k])) for k in keys])
            writer.writerow(["mean"] + [repr(float(self.mean_row[k])) for k in keys])
        return jsonl_path, csv_path


def read_jsonl(path) -> dict:
    """Parse a report written by ``BenchmarkReport.write`` back into parts."""
    header, rows, mean, aggregate, timing = None, [], None, None, None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            kind = record.pop("type")
            if kind == "header":
                header = record
            elif kind == "row":
                rows.append(record)
            elif kind == "mean":
                mean = record
            elif kind == "aggregate":
                aggregate = record
            elif kind == "timing":
                timing = record
    return {"header": header, "rows": rows, "mean": mean,
            "aggregate": aggregate, "timing": timing}


def read_csv(path) -> tuple[list[dict], dict]:
    """Parse a report CSV back into (rows, mean_row) with float fields."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        mean = None
        for line in reader:
            row = {"file": line[0]}
            row.update({k: float(v) for k, v in zip(header[1:], line[1:])})
            if line[0] == "mean":
                mean = {k: v for k, v in row.items() if k != "file"}
            else:
                rows.append(row)
    return rows, mean
