"""Per-fold scoring and report files; needs prediction files only, no model."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from multisense import metrics
from multisense.corpus import Instance
from multisense.predictions import PredictionRecord
from multisense.runio import atomic_write_text


def fold_name(fold_id: int) -> str:
    return f"fold_{fold_id:02d}"


def evaluate_fold(records: Sequence[PredictionRecord], test: Sequence[Instance], method: str, digest: str | None,
                  fold_id: int, run_dir: str | Path | None = None) -> metrics.MetricsReport:
    """Score one fold under its method's criterion; m1/m2 also get a single-label report."""
    criterion = metrics.SINGLE_LABEL if method == "baseline" else metrics.MULTI_LABEL
    report = metrics.evaluate_records(records, test, criterion, manifest_digest=digest, fold_id=fold_id)
    if run_dir is not None:
        name = fold_name(fold_id)
        atomic_write_text(Path(run_dir) / "metrics" / f"{name}.json", report.to_json())
        if method in ("m1", "m2"):
            single = metrics.evaluate_records(records, test, metrics.SINGLE_LABEL, manifest_digest=digest,
                                              fold_id=fold_id)
            atomic_write_text(Path(run_dir) / "metrics" / f"{name}.single.json", single.to_json())
    return report


def write_report(agg: metrics.AggregateReport, out_dir: str | Path, prefix: str = "") -> None:
    """Aggregate table, JSON, and (multi-label) count tables and matrices."""
    out = Path(out_dir)
    d = agg.manifest_digest
    atomic_write_text(out / f"{prefix}aggregate.txt", metrics.format_aggregate(agg))
    atomic_write_text(out / f"{prefix}aggregate.json", metrics.aggregate_to_json(agg))
    if agg.criterion != metrics.MULTI_LABEL:
        return
    atomic_write_text(out / f"{prefix}count_table.txt", metrics.format_count_table(agg.count_table, d))
    atomic_write_text(out / f"{prefix}breakdown.txt", metrics.format_breakdown(agg.breakdown, d))
    atomic_write_text(out / f"{prefix}cooccurrence_gold.txt", metrics.format_matrix(agg.cooccurrence_gold, d))
    atomic_write_text(out / f"{prefix}cooccurrence_pred.txt", metrics.format_matrix(agg.cooccurrence_pred, d))
    atomic_write_text(out / f"{prefix}underprediction.txt", metrics.format_pair_map(agg.underprediction, True, d))
    atomic_write_text(out / f"{prefix}overprediction.txt", metrics.format_pair_map(agg.overprediction, False, d))
