"""Discourse-relation records: ingestion, vocabulary filtering, statistics, duplication.

A record is one JSON object per line::

    {"id": "wsj_0043#0", "doc_id": "wsj_0043", "section": 0,
     "relation_kind": "implicit-inter-sentential",
     "arg1": "...", "arg2": "...", "labels": ["Concession", "Asynchronous"]}

``id`` is optional on input; when missing it is derived as ``<doc_id>#<k>`` where
``k`` counts earlier records of the same document.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SENSES: tuple[str, ...] = (
    "Concession",
    "Contrast",
    "Cause",
    "Cause+Belief",
    "Condition",
    "Purpose",
    "Conjunction",
    "Equivalence",
    "Instantiation",
    "Level-of-detail",
    "Manner",
    "Substitution",
    "Asynchronous",
    "Synchronous",
)
NUM_LABELS = len(SENSES)
LABEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(SENSES)}

LEVEL1_PARENT: dict[str, str] = {
    "Concession": "Comparison",
    "Contrast": "Comparison",
    "Cause": "Contingency",
    "Cause+Belief": "Contingency",
    "Condition": "Contingency",
    "Purpose": "Contingency",
    "Conjunction": "Expansion",
    "Equivalence": "Expansion",
    "Instantiation": "Expansion",
    "Level-of-detail": "Expansion",
    "Manner": "Expansion",
    "Substitution": "Expansion",
    "Asynchronous": "Temporal",
    "Synchronous": "Temporal",
}

RELATION_KINDS = ("implicit-inter-sentential", "implicit-intra-sentential")
NUM_SECTIONS = 25
MAX_LABELS = 2

# Published PDTB-3 implicit-relation counts, used to check a user-supplied corpus.
PDTB3_LEVEL2_COUNTS: dict[str, int] = {
    "Concession": 1494,
    "Contrast": 983,
    "Cause": 5785,
    "Cause+Belief": 202,
    "Condition": 199,
    "Purpose": 1373,
    "Conjunction": 4386,
    "Equivalence": 336,
    "Instantiation": 1533,
    "Level-of-detail": 3361,
    "Manner": 739,
    "Substitution": 450,
    "Asynchronous": 1289,
    "Synchronous": 539,
}
PDTB3_LEVEL1_COUNTS: dict[str, int] = {
    "Comparison": 2518,
    "Contingency": 7583,
    "Expansion": 10833,
    "Temporal": 1828,
}
# Pairs with more than 3 instances, in annotation order (both orders may occur).
PDTB3_PAIR_COUNTS: dict[tuple[str, str], int] = {
    ("Asynchronous", "Cause"): 6,
    ("Asynchronous", "Contrast"): 4,
    ("Cause+Belief", "Instantiation"): 7,
    ("Cause+Belief", "Level-of-detail"): 13,
    ("Cause", "Asynchronous"): 11,
    ("Cause", "Instantiation"): 50,
    ("Cause", "Level-of-detail"): 101,
    ("Cause", "Manner"): 100,
    ("Cause", "Substitution"): 7,
    ("Concession", "Asynchronous"): 4,
    ("Concession", "Substitution"): 4,
    ("Condition", "Manner"): 10,
    ("Conjunction", "Asynchronous"): 12,
    ("Conjunction", "Cause"): 4,
    ("Contrast", "Asynchronous"): 4,
    ("Contrast", "Substitution"): 35,
    ("Purpose", "Manner"): 378,
    ("Purpose", "Substitution"): 34,
    ("Synchronous", "Contrast"): 112,
    ("Synchronous", "Level-of-detail"): 4,
}


class RecordError(ValueError):
    """A record line that does not satisfy the record schema."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Instance:
    """One argument pair with its gold sense set.

    ``labels`` keeps the annotation order (it matters for ordered pair tables only);
    names outside the vocabulary survive until :func:`filter_vocabulary`. ``origin``
    links an instance produced by :func:`duplicate_expansion` to its source id.
    """

    id: str
    doc_id: str
    section: int
    arg1: str
    arg2: str
    labels: tuple[str, ...]
    relation_kind: str = RELATION_KINDS[0]
    origin: str | None = None

    @property
    def label_ids(self) -> frozenset[int]:
        return frozenset(LABEL_INDEX[name] for name in self.labels if name in LABEL_INDEX)

    @property
    def is_multilabel(self) -> bool:
        return len(self.labels) == 2


_REQUIRED = ("doc_id", "section", "relation_kind", "arg1", "arg2", "labels")


def parse_record(obj: object, line_no: int | None = None) -> Instance:
    """Validate one decoded record; ``id`` may be absent (filled in by the caller)."""
    if not isinstance(obj, dict):
        raise RecordError("record is not an object", line_no)
    for key in _REQUIRED:
        if key not in obj:
            raise RecordError(f"missing field '{key}'", line_no)
    doc_id = obj["doc_id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise RecordError("doc_id must be a nonempty string", line_no)
    section = obj["section"]
    if isinstance(section, bool) or not isinstance(section, int):
        raise RecordError("section must be an integer", line_no)
    if not 0 <= section < NUM_SECTIONS:
        raise RecordError(f"section {section} outside [0,24]", line_no)
    kind = obj["relation_kind"]
    if kind not in RELATION_KINDS:
        raise RecordError(f"unknown relation_kind {kind!r}", line_no)
    args = []
    for key in ("arg1", "arg2"):
        text = obj[key]
        if not isinstance(text, str) or not text.strip():
            raise RecordError(f"{key} is empty", line_no)
        args.append(text)
    labels = obj["labels"]
    if not isinstance(labels, list) or not all(isinstance(x, str) and x for x in labels):
        raise RecordError("labels must be a list of label names", line_no)
    if not labels:
        raise RecordError("zero labels", line_no)
    if len(labels) > MAX_LABELS:
        raise RecordError(f"label set exceeds {MAX_LABELS}", line_no)
    if len(set(labels)) != len(labels):
        raise RecordError("duplicate label", line_no)
    rec_id = obj.get("id")
    if rec_id is not None and (not isinstance(rec_id, str) or not rec_id):
        raise RecordError("id must be a nonempty string", line_no)
    origin = obj.get("origin")
    return Instance(
        id=rec_id or "",
        doc_id=doc_id,
        section=section,
        arg1=args[0],
        arg2=args[1],
        labels=tuple(labels),
        relation_kind=kind,
        origin=origin,
    )


def parse_records(lines: Iterable[str] | str, *, errors: list[RecordError] | None = None) -> list[Instance]:
    """Parse line-delimited records in input order.

    Raises :class:`RecordError` on the first malformed line, unless ``errors`` is
    given, in which case bad lines are appended there and skipped. Blank lines are
    ignored.
    """
    if isinstance(lines, str):
        lines = lines.split("\n")  # splitlines() would also break on U+0085 and U+2028
    out: list[Instance] = []
    per_doc: Counter[str] = Counter()
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON ({exc.msg})", line_no) from None
            inst = parse_record(obj, line_no)
            if not inst.id:
                inst = replace(inst, id=f"{inst.doc_id}#{per_doc[inst.doc_id]}")
            if inst.id in seen:
                raise RecordError(f"duplicate id {inst.id!r}", line_no)
        except RecordError as err:
            if errors is None:
                raise
            errors.append(err)
            continue
        per_doc[inst.doc_id] += 1
        seen.add(inst.id)
        out.append(inst)
    return out


def serialize_record(inst: Instance) -> str:
    obj = {
        "id": inst.id,
        "doc_id": inst.doc_id,
        "section": inst.section,
        "relation_kind": inst.relation_kind,
        "arg1": inst.arg1,
        "arg2": inst.arg2,
        "labels": list(inst.labels),
    }
    if inst.origin is not None:
        obj["origin"] = inst.origin
    return json.dumps(obj, ensure_ascii=False)


def read_records(path: str | Path, *, errors: list[RecordError] | None = None) -> list[Instance]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh, errors=errors)


def dump_records(instances: Iterable[Instance]) -> str:
    return "".join(serialize_record(inst) + "\n" for inst in instances)


def corpus_digest(instances: Iterable[Instance]) -> str:
    """SHA-256 over the canonical serialization; order-sensitive."""
    h = hashlib.sha256()
    for inst in instances:
        h.update(serialize_record(inst).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class DropReport:
    dropped: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)
    stripped: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"dropped {len(self.dropped)}", f"stripped {len(self.stripped)}"]
        lines += [f"drop\t{i}\t{','.join(lbls)}" for i, lbls in self.dropped]
        lines += [f"strip\t{i}\t{','.join(lbls)}" for i, lbls in self.stripped]
        return "\n".join(lines) + "\n"


def filter_vocabulary(instances: Iterable[Instance]) -> tuple[list[Instance], DropReport]:
    """Remove out-of-vocabulary senses; drop instances left without any label."""
    kept: list[Instance] = []
    report = DropReport()
    for inst in instances:
        inside = tuple(n for n in inst.labels if n in LABEL_INDEX)
        outside = tuple(n for n in inst.labels if n not in LABEL_INDEX)
        if not inside:
            report.dropped.append((inst.id, outside))
            logger.info("dropping %s: no in-vocabulary label (%s)", inst.id, ", ".join(outside))
            continue
        if outside:
            report.stripped.append((inst.id, outside))
            inst = replace(inst, labels=inside)
        kept.append(inst)
    return kept, report


def pair_key(a: str, b: str) -> tuple[str, str]:
    """Unordered pair as a canonically ordered tuple."""
    return (a, b) if LABEL_INDEX[a] <= LABEL_INDEX[b] else (b, a)


@dataclass
class CorpusStats:
    label_counts: dict[str, int]
    pair_counts: dict[tuple[str, str], int]
    ordered_pair_counts: dict[tuple[str, str], int]
    level1_counts: dict[str, int]
    total: int
    multilabel_share: float

    def pair_count(self, a: str, b: str) -> int:
        return self.pair_counts.get(pair_key(a, b), 0)

    def label_table(self) -> str:
        rows = [("Label", "n")]
        rows += [(name, str(n)) for name, n in self.level1_counts.items()]
        rows += [(f"{LEVEL1_PARENT[name]}.{name}", str(self.label_counts[name])) for name in SENSES]
        return _format_rows(rows)

    def pair_table(self) -> str:
        rows = [("Label", "number")]
        rows += [(f"{a}/{b}", str(n)) for (a, b), n in sorted(self.ordered_pair_counts.items())]
        return _format_rows(rows)


def _format_rows(rows: Sequence[tuple[str, str]]) -> str:
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{a:<{width}}  {b:>6}" for a, b in rows) + "\n"


def compute_stats(instances: Sequence[Instance]) -> CorpusStats:
    """Per-label, per-pair and Level-1 tallies over a filtered corpus."""
    if not instances:
        raise ValueError("empty corpus")
    labels: Counter[str] = Counter()
    pairs: Counter[tuple[str, str]] = Counter()
    ordered: Counter[tuple[str, str]] = Counter()
    level1: Counter[str] = Counter()
    multi = 0
    for inst in instances:
        labels.update(inst.labels)
        level1.update({LEVEL1_PARENT[n] for n in inst.labels})
        if len(inst.labels) == 2:
            multi += 1
            pairs[pair_key(*inst.labels)] += 1
            ordered[inst.labels] += 1
    return CorpusStats(
        label_counts={name: labels[name] for name in SENSES},
        pair_counts=dict(sorted(pairs.items())),
        ordered_pair_counts=dict(sorted(ordered.items())),
        level1_counts={p: level1[p] for p in ("Comparison", "Contingency", "Expansion", "Temporal")},
        total=len(instances),
        multilabel_share=multi / len(instances),
    )


def to_label_vector(labels: Iterable[str | int]) -> np.ndarray:
    """Binary indicator vector over the 14 senses."""
    bits = np.zeros(NUM_LABELS, dtype=np.int8)
    count = 0
    for lab in labels:
        idx = LABEL_INDEX[lab] if isinstance(lab, str) else int(lab)
        if not 0 <= idx < NUM_LABELS:
            raise ValueError(f"label index {idx} out of range")
        bits[idx] = 1
        count += 1
    if count == 0:
        raise ValueError("empty label set")
    return bits


def from_label_vector(bits: Sequence[int] | np.ndarray) -> tuple[str, ...]:
    return tuple(SENSES[i] for i in np.flatnonzero(np.asarray(bits)))


def all_valid_label_sets() -> list[tuple[str, ...]]:
    """Every singleton and unordered pair: 14 + 91 sets."""
    singles = [(s,) for s in SENSES]
    return singles + [tuple(p) for p in combinations(SENSES, 2)]


def duplicate_expansion(instances: Iterable[Instance]) -> list[Instance]:
    """Split each 2-label instance into single-label copies linked by ``origin``."""
    out: list[Instance] = []
    for inst in instances:
        if len(inst.labels) == 1:
            out.append(replace(inst, origin=inst.id))
            continue
        for k, name in enumerate(inst.labels):
            out.append(replace(inst, id=f"{inst.id}/{k}", labels=(name,), origin=inst.id))
    return out
