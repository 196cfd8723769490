"""Head / tail / overall top-1 accuracy and result files."""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

RESULT_COLUMNS = ["strategy", "seed", "head", "tail", "overall"]


@dataclass
class EvalReport:
    """Accuracies in percent. ``seed`` is None for aggregated mean rows."""

    strategy: str
    seed: int | None
    head_acc: float
    tail_acc: float
    overall_acc: float
    per_class_accuracy: dict = field(default_factory=dict)


def _group_mean(per_class, classes):
    vals = [per_class[c] for c in sorted(classes)]
    return float(np.mean(vals)) if vals else math.nan


def topk1_accuracy(predictions, labels, split, n_classes=None, strategy="", seed=None) -> EvalReport:
    """Per-class top-1 accuracy averaged over head (incl. boundary), tail and all classes."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise InvalidArgument("predictions and labels are not aligned")
    if n_classes is None:
        n_classes = len(split.head | split.tail | split.boundary)
    per_class = {}
    for c in range(n_classes):
        mask = labels == c
        if not mask.any():
            raise InvalidArgument(f"class {c} has no test samples")
        per_class[c] = 100.0 * float(np.mean(predictions[mask] == c))
    return EvalReport(
        strategy,
        seed,
        _group_mean(per_class, split.head_group),
        _group_mean(per_class, split.tail),
        _group_mean(per_class, range(n_classes)),
        per_class,
    )


def mean_report(reports) -> EvalReport:
    return EvalReport(
        reports[0].strategy,
        None,
        statistics.fmean(r.head_acc for r in reports),
        statistics.fmean(r.tail_acc for r in reports),
        statistics.fmean(r.overall_acc for r in reports),
    )


def stdev_report(reports):
    if len(reports) < 2:
        return (0.0, 0.0, 0.0)
    return tuple(statistics.stdev(getattr(r, a) for r in reports) for a in ("head_acc", "tail_acc", "overall_acc"))


def _group_by_strategy(reports):
    groups = {}
    for r in reports:
        groups.setdefault(r.strategy, []).append(r)
    return groups


def emit_report(reports, out_dir, decimals=4):
    """Write results.csv (per-seed rows then a ``mean`` row per strategy) and results.json."""
    if not reports:
        raise InvalidArgument("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _group_by_strategy(reports)
    fmt = f"{{:.{decimals}f}}"
    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for strategy, rows in groups.items():
            for r in rows:
                w.writerow([strategy, r.seed, fmt.format(r.head_acc), fmt.format(r.tail_acc), fmt.format(r.overall_acc)])
            m = mean_report(rows)
            w.writerow([strategy, "mean", fmt.format(m.head_acc), fmt.format(m.tail_acc), fmt.format(m.overall_acc)])
    summary = {}
    for strategy, rows in groups.items():
        m = mean_report(rows)
        sd = stdev_report(rows)
        summary[strategy] = {
            "seeds": [r.seed for r in rows],
            "runs": [{k: v for k, v in asdict(r).items() if k != "per_class_accuracy"} for r in rows],
            "per_class_accuracy": [{str(c): a for c, a in r.per_class_accuracy.items()} for r in rows],
            "mean": {"head": m.head_acc, "tail": m.tail_acc, "overall": m.overall_acc},
            "stdev": dict(zip(("head", "tail", "overall"), sd)),
        }
    (out_dir / "results.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out_dir / "results.csv"


def read_results_csv(path):
    """Rows of results.csv as dicts with float accuracies; seed is int or 'mean'."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            seed = row["seed"]
            rows.append({
                "strategy": row["strategy"],
                "seed": seed if seed == "mean" else int(seed),
                "head": float(row["head"]),
                "tail": float(row["tail"]),
                "overall": float(row["overall"]),
            })
    return rows
