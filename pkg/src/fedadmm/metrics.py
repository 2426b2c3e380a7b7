"""Metric files (CSV/JSON), run manifests and cross-run comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .orchestrator import RoundRecord

CSV_COLUMNS = (
    "round",
    "train_loss",
    "test_accuracy",
    "selected_steps",
    "cumulative_steps",
    "beta_mean",
    "beta_min",
    "beta_max",
    "criterion_unmet_count",
)


def format_number(value) -> str:
    """17 significant digits for floats, plain digits for ints, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return f"{value:.17g}"


def record_row(rec: RoundRecord) -> dict:
    return {name: getattr(rec, name) for name in CSV_COLUMNS}


def csv_header() -> str:
    return ",".join(CSV_COLUMNS) + "\n"


def csv_line(rec: RoundRecord) -> str:
    return ",".join(format_number(v) for v in record_row(rec).values()) + "\n"


def json_text(records: Iterable[RoundRecord]) -> str:
    objects = []
    for rec in records:
        fields = []
        for name, value in record_row(rec).items():
            text = format_number(value)
            if text in ("", "nan", "inf", "-inf"):
                text = "null"
            fields.append(f'"{name}": {text}')
        objects.append("  {" + ", ".join(fields) + "}")
    return "[\n" + ",\n".join(objects) + ("\n" if objects else "") + "]\n"


def emit_metrics(records: Iterable[RoundRecord], fmt: str, path) -> None:
    records = list(records)
    if fmt == "csv":
        text = csv_header() + "".join(csv_line(r) for r in records)
    elif fmt == "json":
        text = json_text(records)
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")
    Path(path).write_text(text)


class CsvStream:
    """Append records to a CSV file as they arrive, flushing after each row."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._fh.write(csv_header())
        self._fh.flush()

    def __call__(self, rec: RoundRecord) -> None:
        self._fh.write(csv_line(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for raw in reader:
            row = {}
            for key, text in raw.items():
                if text == "":
                    row[key] = None
                elif key in ("round", "selected_steps", "cumulative_steps", "criterion_unmet_count"):
                    row[key] = int(text)
                else:
                    row[key] = float(text)
            rows.append(row)
    return rows


def step_reduction(steps: int, baseline_steps: int) -> float:
    """Percent fewer local steps than the baseline."""
    if baseline_steps <= 0:
        raise ValueError(f"baseline must have taken steps, got {baseline_steps}")
    return 100.0 * (1.0 - steps / baseline_steps)


@dataclass
class RunSummary:
    path: str
    label: str
    final_accuracy: float | None
    final_loss: float | None
    total_steps: int
    reduction: float


def _last(rows, key):
    for row in reversed(rows):
        if row[key] is not None:
            return row[key]
    return None


def _label(config: dict) -> str:
    ex = config["experiment"]
    if ex["variant"] == "vanilla":
        return f"FedADMM (E={ex['local_steps']})"
    return {"in": "FedADMM-In", "insa": "FedADMM-InSa"}[ex["variant"]]


def _comparable(config: dict) -> dict:
    ex = config["experiment"]
    data = config["synthetic"] if ex["example"] == "example1" else config["mnist"]
    return {
        "rounds": ex["rounds"],
        "example": ex["example"],
        "clients": ex["clients"],
        "data": data,
        "seeds.data": config["seeds"]["data"],
        "seeds.partition": config["seeds"]["partition"],
    }


def compare_runs(baseline, others) -> tuple[list[RunSummary], list[str]]:
    """Summaries for ``baseline`` followed by ``others``, plus mismatch warnings."""
    dirs = [Path(baseline), *map(Path, others)]
    manifests = [json.loads((d / "manifest.json").read_text()) for d in dirs]
    rows = [read_metrics_csv(d / "metrics.csv") for d in dirs]
    base_steps = rows[0][-1]["cumulative_steps"] if rows[0] else 0
    reference = _comparable(manifests[0]["config"])
    summaries, warnings = [], []
    for d, man, data in zip(dirs, manifests, rows):
        cmp = _comparable(man["config"])
        for key in reference:
            if cmp[key] != reference[key]:
                warnings.append(f"{d}: {key} differs from baseline ({cmp[key]!r} vs {reference[key]!r})")
        steps = data[-1]["cumulative_steps"] if data else 0
        summaries.append(
            RunSummary(
                path=str(d),
                label=_label(man["config"]),
                final_accuracy=_last(data, "test_accuracy"),
                final_loss=_last(data, "train_loss"),
                total_steps=steps,
                reduction=step_reduction(steps, base_steps),
            )
        )
    return summaries, warnings


def format_summary(summaries: list[RunSummary]) -> str:
    out = io.StringIO()
    out.write(f"{'run':<24} {'test acc':>9} {'train loss':>11} {'local steps':>12} {'reduction':>10}\n")
    for s in summaries:
        acc = "-" if s.final_accuracy is None else f"{100 * s.final_accuracy:.1f}%"
        loss = "-" if s.final_loss is None else f"{s.final_loss:.4g}"
        out.write(f"{s.label:<24} {acc:>9} {loss:>11} {s.total_steps:>12} {s.reduction:>9.1f}%\n")
    return out.getvalue()
