"""Evaluation metrics and report emission.

Accuracy variants: exact and top-k over classes or scores, plus relaxed
accuracy which counts a score prediction as correct when
|true - predicted| <= gamma (gamma is an integer on the Likert scale;
gamma = 0 recovers exact accuracy). Per-class tables mirror the bar-chart
reporting style; emission is byte-deterministic with 4-decimal floats.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetIOError, InvalidK, OutOfRange, ZeroBaseline
from .likert import SCORE_COUNT, SCORE_HIGH, SCORE_LOW


@dataclass
class PredictionRecord:
    sample_id: str
    true_score: int
    predicted_score: int
    score_probs: np.ndarray
    true_class: int | None = None
    predicted_class: int | None = None
    class_probs: np.ndarray | None = None


@dataclass
class ClassRow:
    class_index: int
    count: int
    accuracy: float
    relaxed_accuracy: float
    empty: bool = False


@dataclass
class PerClassSummary:
    rows: list
    mean_accuracy: float
    mean_relaxed_accuracy: float
    min_accuracy: float
    max_accuracy: float


@dataclass
class MetricsReport:
    top1: float
    top5: float
    mean_accuracy: float
    mean_relaxed_accuracy: float
    overall_empirical: float
    overall_combined: float
    gamma: int
    per_class: PerClassSummary
    score_confusion: np.ndarray | None = None
    flat_accuracy: float | None = None
    improvement_vs_flat: float | None = None
    extras: dict = field(default_factory=dict)


def _ranked_labels(probs: np.ndarray) -> np.ndarray:
    """Label indices from most to least probable; ties go to the lowest index."""
    return np.argsort(-np.asarray(probs), kind="stable")


def topk_accuracy(records, k: int, field_name: str = "class") -> float:
    """Fraction of records whose true label ranks in the top k probabilities."""
    records = list(records)
    if field_name == "class":
        pairs = [(r.true_class, r.class_probs) for r in records]
    elif field_name == "score":
        pairs = [(r.true_score - SCORE_LOW, r.score_probs) for r in records]
    else:
        raise InvalidK(f"field must be 'class' or 'score', got {field_name!r}")
    if not pairs:
        return 0.0
    n_labels = len(pairs[0][1])
    if not 1 <= k <= n_labels:
        raise InvalidK(f"k must be in [1, {n_labels}], got {k}")
    hits = sum(1 for true, probs in pairs if true in _ranked_labels(probs)[:k])
    return hits / len(pairs)


def exact_accuracy(records, field_name: str = "score") -> float:
    records = list(records)
    if not records:
        return 0.0
    if field_name == "score":
        hits = sum(1 for r in records if r.predicted_score == r.true_score)
    else:
        hits = sum(1 for r in records if r.predicted_class == r.true_class)
    return hits / len(records)


def relaxed_accuracy(records, gamma: int) -> float:
    """Fraction with |true_score - predicted_score| <= gamma."""
    if not isinstance(gamma, (int, np.integer)) or isinstance(gamma, bool):
        raise OutOfRange(f"gamma must be an integer, got {gamma!r}")
    if gamma < 0:
        raise OutOfRange(f"gamma must be >= 0, got {gamma}")
    records = list(records)
    if not records:
        return 0.0
    hits = sum(1 for r in records if abs(r.true_score - r.predicted_score) <= gamma)
    return hits / len(records)


def per_class_summary(records, gamma: int = 1) -> PerClassSummary:
    """Per-class exact and relaxed score accuracy plus unweighted means.

    Classes present in the label range but absent from the records are
    flagged empty rather than failing.
    """
    records = list(records)
    classes = sorted({r.true_class for r in records if r.true_class is not None})
    rows = []
    for c in classes:
        subset = [r for r in records if r.true_class == c]
        if not subset:
            rows.append(ClassRow(c, 0, float("nan"), float("nan"), empty=True))
            continue
        rows.append(ClassRow(
            class_index=c,
            count=len(subset),
            accuracy=exact_accuracy(subset, "score"),
            relaxed_accuracy=relaxed_accuracy(subset, gamma),
        ))
    live = [r for r in rows if not r.empty]
    accs = [r.accuracy for r in live]
    return PerClassSummary(
        rows=rows,
        mean_accuracy=float(np.mean(accs)) if live else 0.0,
        mean_relaxed_accuracy=float(np.mean([r.relaxed_accuracy for r in live])) if live else 0.0,
        min_accuracy=min(accs) if live else 0.0,
        max_accuracy=max(accs) if live else 0.0,
    )


def score_confusion(records) -> np.ndarray:
    """Raw confusion counts, true score along rows, predicted along columns."""
    mat = np.zeros((SCORE_COUNT, SCORE_COUNT), dtype=np.int64)
    for r in records:
        mat[r.true_score - SCORE_LOW, r.predicted_score - SCORE_LOW] += 1
    return mat


def improvement_ratio(new: float, baseline: float) -> float:
    """(new - baseline) / baseline."""
    if baseline <= 0.0:
        raise ZeroBaseline(f"baseline must be > 0, got {baseline}")
    return (new - baseline) / baseline


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return f"{x:.4f}"


def _report_scalars(report: MetricsReport) -> list:
    rows = [
        ("top1", report.top1),
        ("top5", report.top5),
        ("mean_accuracy", report.mean_accuracy),
        ("mean_relaxed_accuracy", report.mean_relaxed_accuracy),
        ("overall_empirical", report.overall_empirical),
        ("overall_combined", report.overall_combined),
        ("gamma", float(report.gamma)),
    ]
    if report.flat_accuracy is not None:
        rows.append(("flat_accuracy", report.flat_accuracy))
    if report.improvement_vs_flat is not None:
        rows.append(("improvement_vs_flat", report.improvement_vs_flat))
    for key in sorted(report.extras):
        rows.append((key, report.extras[key]))
    return rows


def emit_report(report: MetricsReport, path, fmt: str = "json") -> list:
    """Write report.{json|csv} plus classes.csv (and confusion.csv if present).

    Identical reports produce identical bytes. Returns the written paths.
    """
    if fmt not in ("json", "csv"):
        raise OutOfRange(f"format must be 'json' or 'csv', got {fmt!r}")
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        written = []

        if fmt == "json":
            doc = {name: (None if value is None else round(float(value), 4))
                   for name, value in _report_scalars(report)}
            doc["per_class"] = [
                {"class": r.class_index, "count": r.count,
                 "accuracy": None if r.empty else round(r.accuracy, 4),
                 "relaxed_accuracy": None if r.empty else round(r.relaxed_accuracy, 4),
                 "empty": r.empty}
                for r in report.per_class.rows
            ]
            target = path / "report.json"
            target.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            written.append(target)
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["metric", "value"])
            for name, value in _report_scalars(report):
                writer.writerow([name, _fmt(value)])
            target = path / "report.csv"
            target.write_text(buf.getvalue())
            written.append(target)

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "accuracy", "relaxed_accuracy"])
        for r in report.per_class.rows:
            writer.writerow([r.class_index, _fmt(r.accuracy), _fmt(r.relaxed_accuracy)])
        classes_path = path / "classes.csv"
        classes_path.write_text(buf.getvalue())
        written.append(classes_path)

        if report.score_confusion is not None:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow([f"pred_{s}" for s in range(SCORE_LOW, SCORE_HIGH + 1)])
            for row in report.score_confusion:
                writer.writerow([int(v) for v in row])
            conf_path = path / "confusion.csv"
            conf_path.write_text(buf.getvalue())
            written.append(conf_path)
        return written
    except OSError as exc:
        raise DatasetIOError(f"cannot write report at {path}: {exc}") from exc


def parse_report(path) -> dict:
    """Read back a report.json (or report.csv) into {metric: value}."""
    path = Path(path)
    json_path = path / "report.json"
    if json_path.exists():
        return json.loads(json_path.read_text())
    csv_path = path / "report.csv"
    if not csv_path.exists():
        raise DatasetIOError(f"no report.json or report.csv under {path}")
    out = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["metric"]] = float(row["value"]) if row["value"] else None
    return out
