"""Evaluation and analysis over prediction sets.

Predictions and golds are aligned sequences of label-index sets. Ratios are kept
as fractions internally and rendered as percentages in text reports. A ratio with
a zero denominator is 0.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from multisense.corpus import NUM_LABELS, SENSES, Instance
from multisense.predictions import PredictionRecord, argmax_predict

LabelSet = frozenset
MULTI_LABEL = "multi-label"
SINGLE_LABEL = "single-label"
PRED_ROWS = ("0", "1", "2", ">2")


class AlignmentError(ValueError):
    pass


def align(records: Sequence[PredictionRecord], instances: Sequence[Instance]):
    """Match records to gold instances by id -> (records, golds) in record order."""
    gold_by_id = {inst.id: inst.label_ids for inst in instances}
    seen = set()
    golds = []
    for rec in records:
        if rec.instance_id not in gold_by_id:
            raise AlignmentError(f"prediction for unknown instance {rec.instance_id!r}")
        if rec.instance_id in seen:
            raise AlignmentError(f"duplicate prediction for {rec.instance_id!r}")
        seen.add(rec.instance_id)
        golds.append(gold_by_id[rec.instance_id])
    missing = len(gold_by_id) - len(seen)
    if missing:
        raise AlignmentError(f"{missing} gold instances have no prediction")
    return list(records), golds


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, n: int = NUM_LABELS) -> ConfusionCounts:
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))


def _check_lengths(preds: Sequence, golds: Sequence) -> None:
    if len(preds) != len(golds):
        raise AlignmentError(f"{len(preds)} predictions vs {len(golds)} golds")


def confusion(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> ConfusionCounts:
    _check_lengths(preds, golds)
    counts = ConfusionCounts.zeros()
    for pred, gold in zip(preds, golds):
        for i in pred & gold:
            counts.tp[i] += 1
        for i in pred - gold:
            counts.fp[i] += 1
        for i in gold - pred:
            counts.fn[i] += 1
    return counts


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = num.astype(float)
    den = den.astype(float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class PRF:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())


def macro_prf(counts: ConfusionCounts) -> PRF:
    """Per-label precision/recall/F1; macro values are their unweighted means."""
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f = _ratio(2 * p * r, p + r)
    return PRF(p, r, f)


def hamming(preds: Sequence[LabelSet], golds: Sequence[LabelSet], num_labels: int = NUM_LABELS) -> float:
    _check_lengths(preds, golds)
    if not preds:
        return 0.0
    return sum(len(p ^ g) for p, g in zip(preds, golds)) / (num_labels * len(preds))


def single_criterion_counts(pred_labels: Sequence[int], golds: Sequence[LabelSet],
                            fn_per_gold: bool = True) -> ConfusionCounts:
    """A single predicted label is correct if it is any of the gold labels.

    On a miss the predicted label gets a false positive and every gold label a
    false negative; with ``fn_per_gold=False`` only the lowest-index gold label does.
    """
    _check_lengths(pred_labels, golds)
    counts = ConfusionCounts.zeros()
    for pred, gold in zip(pred_labels, golds):
        if pred in gold:
            counts.tp[pred] += 1
            continue
        counts.fp[pred] += 1
        for i in (sorted(gold) if fn_per_gold else sorted(gold)[:1]):
            counts.fn[i] += 1
    return counts


def single_criterion_eval(probs: Sequence[Sequence[float]], golds: Sequence[LabelSet],
                          fn_per_gold: bool = True) -> PRF:
    """Reduce each probability vector to its argmax label, then score."""
    return macro_prf(single_criterion_counts([argmax_predict(p) for p in probs], golds, fn_per_gold))


def count_table(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> np.ndarray:
    """Instance counts by (predicted count, gold count).

    Rows are predicted counts 0, 1, 2 and >2; columns gold counts 1 and 2.
    """
    _check_lengths(preds, golds)
    table = np.zeros((4, 2), dtype=np.int64)
    for pred, gold in zip(preds, golds):
        if len(gold) not in (1, 2):
            raise ValueError(f"gold set of size {len(gold)}")
        table[min(len(pred), 3), len(gold) - 1] += 1
    return table


@dataclass
class Breakdown:
    both_correct: int = 0
    one_correct: int = 0
    both_incorrect: int = 0
    no_prediction: int = 0
    flagged: int = 0  # predictions larger than 2 that cover both gold labels

    @property
    def total(self) -> int:
        return self.both_correct + self.one_correct + self.both_incorrect + self.no_prediction

    def as_dict(self) -> dict[str, int]:
        return {
            "both_correct": self.both_correct,
            "one_correct": self.one_correct,
            "both_incorrect": self.both_incorrect,
            "no_prediction": self.no_prediction,
            "flagged": self.flagged,
        }

    def percentages(self) -> dict[str, float]:
        n = self.total
        return {k: (100.0 * v / n if n else 0.0) for k, v in self.as_dict().items() if k != "flagged"}


def multilabel_breakdown(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> Breakdown:
    """Outcome classes over instances with exactly two gold labels."""
    _check_lengths(preds, golds)
    out = Breakdown()
    for pred, gold in zip(preds, golds):
        if len(gold) != 2:
            continue
        hit = len(pred & gold)
        if pred == gold:
            out.both_correct += 1
        elif not pred:
            out.no_prediction += 1
        elif hit == 0:
            out.both_incorrect += 1
        else:
            out.one_correct += 1
            if hit == 2:
                out.flagged += 1
    return out


def cooccurrence(pairs: Iterable[LabelSet]) -> np.ndarray:
    """Symmetric count matrix over 2-element label sets; other sizes are skipped."""
    m = np.zeros((NUM_LABELS, NUM_LABELS), dtype=np.int64)
    for pair in pairs:
        if len(pair) != 2:
            continue
        a, b = sorted(pair)
        m[a, b] += 1
        m[b, a] += 1
    return m


def underprediction_matrix(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> Counter:
    """(gold pair a<b, single predicted label) -> count, for |gold|=2 and |pred|=1."""
    _check_lengths(preds, golds)
    out: Counter = Counter()
    for pred, gold in zip(preds, golds):
        if len(gold) == 2 and len(pred) == 1:
            out[(*sorted(gold), next(iter(pred)))] += 1
    return out


def overprediction_matrix(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> Counter:
    """(gold label, predicted pair a<b) -> count, for |gold|=1 and |pred|=2."""
    _check_lengths(preds, golds)
    out: Counter = Counter()
    for pred, gold in zip(preds, golds):
        if len(gold) == 1 and len(pred) == 2:
            out[(next(iter(gold)), *sorted(pred))] += 1
    return out


def _counter_to_list(c: Mapping) -> list[list[int]]:
    return [[*k, v] for k, v in sorted(c.items())]


def _list_to_counter(rows: Iterable[Sequence[int]]) -> Counter:
    return Counter({tuple(r[:-1]): r[-1] for r in rows})


@dataclass
class MetricsReport:
    """One fold's evaluation.

    Multi-label reports carry every analysis; single-label reports carry only
    per-label and macro P/R/F1.
    """

    criterion: str
    n_instances: int
    precision: list[float]
    recall: list[float]
    f1: list[float]
    hamming: float | None = None
    count_table: list[list[int]] | None = None
    breakdown: dict[str, int] | None = None
    cooccurrence_gold: list[list[int]] | None = None
    cooccurrence_pred: list[list[int]] | None = None
    underprediction: list[list[int]] | None = None
    overprediction: list[list[int]] | None = None
    manifest_digest: str | None = None
    fold_id: int | None = None

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    def to_json(self) -> str:
        obj = {k: getattr(self, k) for k in self.__dataclass_fields__}
        obj["macro"] = {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1}
        return json.dumps(obj, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        obj = json.loads(text)
        obj.pop("macro", None)
        return cls(**obj)


def evaluate_sets(preds: Sequence[LabelSet], golds: Sequence[LabelSet], **meta) -> MetricsReport:
    """Full multi-label evaluation of aligned prediction and gold sets."""
    prf = macro_prf(confusion(preds, golds))
    return MetricsReport(
        criterion=MULTI_LABEL,
        n_instances=len(preds),
        precision=prf.precision.tolist(),
        recall=prf.recall.tolist(),
        f1=prf.f1.tolist(),
        hamming=hamming(preds, golds),
        count_table=count_table(preds, golds).tolist(),
        breakdown=multilabel_breakdown(preds, golds).as_dict(),
        cooccurrence_gold=cooccurrence(golds).tolist(),
        cooccurrence_pred=cooccurrence(preds).tolist(),
        underprediction=_counter_to_list(underprediction_matrix(preds, golds)),
        overprediction=_counter_to_list(overprediction_matrix(preds, golds)),
        **meta,
    )


def evaluate_single(pred_labels: Sequence[int], golds: Sequence[LabelSet], fn_per_gold: bool = True,
                    **meta) -> MetricsReport:
    prf = macro_prf(single_criterion_counts(pred_labels, golds, fn_per_gold))
    return MetricsReport(SINGLE_LABEL, len(pred_labels), prf.precision.tolist(), prf.recall.tolist(),
                         prf.f1.tolist(), **meta)


def evaluate_records(records: Sequence[PredictionRecord], instances: Sequence[Instance],
                     criterion: str = MULTI_LABEL, fn_per_gold: bool = True, **meta) -> MetricsReport:
    """Score prediction records against gold instances.

    The single-label criterion uses the argmax of ``probs`` when present, else the
    lowest-index predicted label.
    """
    records, golds = align(records, instances)
    if criterion == MULTI_LABEL:
        return evaluate_sets([r.predicted for r in records], golds, **meta)
    if criterion != SINGLE_LABEL:
        raise ValueError(f"unknown criterion {criterion!r}")
    labels = []
    for r in records:
        if r.probs is not None:
            labels.append(argmax_predict(r.probs))
        elif r.predicted:
            labels.append(min(r.predicted))
        else:
            raise ValueError(f"record {r.instance_id!r} has neither probabilities nor a predicted label")
    return evaluate_single(labels, golds, fn_per_gold, **meta)


@dataclass
class Stat:
    mean: float
    std: float  # population
    sample_std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> Stat:
        arr = np.asarray(values, dtype=float)
        return cls(float(arr.mean()), float(arr.std(ddof=0)), float(arr.std(ddof=1)))


@dataclass
class AggregateReport:
    """Mean and spread of ratio metrics across folds; count-type analyses pooled."""

    criterion: str
    n_folds: int
    precision: list[Stat]
    recall: list[Stat]
    f1: list[Stat]
    macro_precision: Stat
    macro_recall: Stat
    macro_f1: Stat
    hamming: Stat | None = None
    count_table: list[list[int]] | None = None
    breakdown: dict[str, int] | None = None
    cooccurrence_gold: list[list[int]] | None = None
    cooccurrence_pred: list[list[int]] | None = None
    underprediction: list[list[int]] | None = None
    overprediction: list[list[int]] | None = None
    manifest_digest: str | None = None
    extra: dict = field(default_factory=dict)


def aggregate(reports: Sequence[MetricsReport]) -> AggregateReport:
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 fold reports")
    criteria = {r.criterion for r in reports}
    if len(criteria) != 1:
        raise ValueError(f"mixed criteria {sorted(criteria)}")
    digests = {r.manifest_digest for r in reports}
    if len(digests) != 1:
        raise ValueError("fold reports come from different run manifests")
    if any(len(r.f1) != NUM_LABELS for r in reports):
        raise ValueError("fold reports disagree on the label vocabulary")

    def per_label(attr: str) -> list[Stat]:
        cols = np.array([getattr(r, attr) for r in reports])
        return [Stat.of(cols[:, i]) for i in range(cols.shape[1])]

    agg = AggregateReport(
        criterion=reports[0].criterion,
        n_folds=len(reports),
        precision=per_label("precision"),
        recall=per_label("recall"),
        f1=per_label("f1"),
        macro_precision=Stat.of([r.macro_precision for r in reports]),
        macro_recall=Stat.of([r.macro_recall for r in reports]),
        macro_f1=Stat.of([r.macro_f1 for r in reports]),
        manifest_digest=reports[0].manifest_digest,
    )
    if agg.criterion == MULTI_LABEL:
        agg.hamming = Stat.of([r.hamming for r in reports])
        agg.count_table = np.sum([r.count_table for r in reports], axis=0).tolist()
        agg.breakdown = dict(sum((Counter(r.breakdown) for r in reports), Counter()))
        agg.breakdown = {k: agg.breakdown.get(k, 0) for k in Breakdown().as_dict()}
        agg.cooccurrence_gold = np.sum([r.cooccurrence_gold for r in reports], axis=0).tolist()
        agg.cooccurrence_pred = np.sum([r.cooccurrence_pred for r in reports], axis=0).tolist()
        agg.underprediction = _counter_to_list(
            sum((_list_to_counter(r.underprediction) for r in reports), Counter()))
        agg.overprediction = _counter_to_list(
            sum((_list_to_counter(r.overprediction) for r in reports), Counter()))
    return agg


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def format_aggregate(agg: AggregateReport) -> str:
    """Tabular text: one row per label plus Total; columns mean and std per metric."""
    head = ["Label", "P", "P_std", "R", "R_std", "F1", "F1_std", "F1_sample_std", "Hamming", "Hamming_std"]
    rows = []
    for i, name in enumerate(SENSES):
        p, r, f = agg.precision[i], agg.recall[i], agg.f1[i]
        rows.append([name, _pct(p.mean), _pct(p.std), _pct(r.mean), _pct(r.std), _pct(f.mean), _pct(f.std),
                     _pct(f.sample_std), "-", "-"])
    ham = agg.hamming
    rows.append([
        "Total", _pct(agg.macro_precision.mean), _pct(agg.macro_precision.std), _pct(agg.macro_recall.mean),
        _pct(agg.macro_recall.std), _pct(agg.macro_f1.mean), _pct(agg.macro_f1.std),
        _pct(agg.macro_f1.sample_std), _pct(ham.mean) if ham else "-", _pct(ham.std) if ham else "-",
    ])
    lines = [f"# manifest {agg.manifest_digest or '-'}", f"# criterion {agg.criterion}, folds {agg.n_folds}"]
    lines.append(_grid(head, rows))
    return "\n".join(lines) + "\n"


def _grid(head: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    fmt = lambda row: "  ".join(str(x).rjust(w) if j else str(x).ljust(w) for j, (x, w) in enumerate(zip(row, widths)))
    return "\n".join([fmt(head), *(fmt(r) for r in rows)])


def format_count_table(table: Sequence[Sequence[int]], digest: str | None = None) -> str:
    rows = [[PRED_ROWS[k], str(table[k][1]), str(table[k][0])] for k in (2, 1, 0, 3)]
    return f"# manifest {digest or '-'}\n" + _grid(["pred\\gold", "2", "1"], rows) + "\n"


def format_breakdown(breakdown: Mapping[str, int], digest: str | None = None) -> str:
    b = Breakdown(**breakdown)
    pct = b.percentages()
    rows = [[k, str(v), f"{pct[k]:.0f}%"] for k, v in b.as_dict().items() if k != "flagged"]
    rows.append(["flagged", str(b.flagged), "-"])
    return f"# manifest {digest or '-'}\n" + _grid(["outcome", "count", "share"], rows) + "\n"


def format_matrix(matrix: Sequence[Sequence[int]], digest: str | None = None) -> str:
    head = ["", *SENSES]
    rows = [[SENSES[i], *(str(v) for v in row)] for i, row in enumerate(matrix)]
    return f"# manifest {digest or '-'}\n" + _grid(head, rows) + "\n"


def format_pair_map(rows: Sequence[Sequence[int]], pair_first: bool, digest: str | None = None) -> str:
    """Under-prediction (pair -> label) or over-prediction (label -> pair) grid."""
    counts = _list_to_counter(rows)
    if pair_first:
        keys = sorted({(a, b) for a, b, _ in counts})
        grid = [[f"{SENSES[a]}/{SENSES[b]}", *(str(counts.get((a, b, k), 0)) for k in range(NUM_LABELS))]
                for a, b in keys]
        head = ["gold pair \\ predicted", *SENSES]
    else:
        keys = sorted({(a, b) for _, a, b in counts})
        grid = [[SENSES[g], *(str(counts.get((g, a, b), 0)) for a, b in keys)] for g in range(NUM_LABELS)]
        head = ["gold \\ predicted pair", *(f"{SENSES[a]}/{SENSES[b]}" for a, b in keys)]
    return f"# manifest {digest or '-'}\n" + _grid(head, grid) + "\n"


def stat_to_dict(s: Stat | None):
    return None if s is None else {"mean": s.mean, "std": s.std, "sample_std": s.sample_std}


def aggregate_to_json(agg: AggregateReport) -> str:
    obj = {
        "criterion": agg.criterion,
        "n_folds": agg.n_folds,
        "manifest_digest": agg.manifest_digest,
        "per_label": {
            name: {m: stat_to_dict(getattr(agg, m)[i]) for m in ("precision", "recall", "f1")}
            for i, name in enumerate(SENSES)
        },
        "total": {m: stat_to_dict(getattr(agg, f"macro_{m}")) for m in ("precision", "recall", "f1")},
        "hamming": stat_to_dict(agg.hamming),
        "count_table": agg.count_table,
        "breakdown": agg.breakdown,
        "cooccurrence_gold": agg.cooccurrence_gold,
        "cooccurrence_pred": agg.cooccurrence_pred,
        "underprediction": agg.underprediction,
        "overprediction": agg.overprediction,
    }
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"

