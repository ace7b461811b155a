"""Convert a PDTB-3 distribution into canonical records.

Expects the release layout ``<root>/gold/<SS>/wsj_<SSDD>`` (pipe-delimited
relation lines) and ``<root>/raw/<SS>/wsj_<SSDD>`` (source text addressed by
character offsets). Only implicit relations are converted. Senses are cut to
Level-2; out-of-vocabulary Level-2 names are kept so that
:func:`multisense.corpus.filter_vocabulary` can report them.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterator

from multisense.corpus import RELATION_KINDS

# Field positions in a gold relation line.
REL_TYPE = 0
SENSE_FIELDS = (8, 9, 11, 12)  # SClass1A, SClass1B, SClass2A, SClass2B
ARG1_SPANS = 14
ARG2_SPANS = 20
MIN_FIELDS = 21

_SENTENCE_END = re.compile(r"[.!?][\"')\]]*\s")


def parse_spans(text: str) -> list[tuple[int, int]]:
    """``"10..20;25..30"`` -> [(10, 20), (25, 30)]."""
    spans = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        start, _, end = part.partition("..")
        spans.append((int(start), int(end)))
    return spans


def level2(sense: str) -> str | None:
    parts = sense.strip().split(".")
    return parts[1] if len(parts) >= 2 and parts[1] else None


def relation_kind(raw: str, arg1: list[tuple[int, int]], arg2: list[tuple[int, int]]) -> str:
    """Inter-sentential when a sentence boundary separates the two arguments.

    Heuristic: looks for sentence-final punctuation followed by whitespace, or a
    line break, between the end of the earlier argument and the start of the later.
    """
    first, second = (arg1, arg2) if arg1[0][0] <= arg2[0][0] else (arg2, arg1)
    lo = max(first[-1][1] - 2, 0)
    hi = second[0][0] + 1
    gap = raw[lo:hi]
    if "\n" in raw[first[-1][1] : second[0][0]] or _SENTENCE_END.search(gap):
        return RELATION_KINDS[0]
    return RELATION_KINDS[1]


def convert_file(gold_path: Path, raw_path: Path, section: int, doc_id: str) -> Iterator[dict | str]:
    """Yield record dicts, or problem strings for relations that cannot be converted."""
    raw = raw_path.read_text(encoding="latin-1")
    for k, line in enumerate(gold_path.read_text(encoding="latin-1").split("\n"), start=1):
        fields = line.split("|")
        if len(fields) < MIN_FIELDS or fields[REL_TYPE] != "Implicit":
            continue
        where = f"{gold_path}:{k}"
        senses = []
        for pos in SENSE_FIELDS:
            name = level2(fields[pos]) if pos < len(fields) and fields[pos] else None
            if name and name not in senses:
                senses.append(name)
        if not senses:
            yield f"{where}: no Level-2 sense"
            continue
        if len(senses) > 2:
            yield f"{where}: {len(senses)} Level-2 senses ({', '.join(senses)})"
            continue
        try:
            s1, s2 = parse_spans(fields[ARG1_SPANS]), parse_spans(fields[ARG2_SPANS])
        except ValueError:
            yield f"{where}: malformed span list"
            continue
        if not s1 or not s2:
            yield f"{where}: missing argument span"
            continue
        arg1 = " ".join(raw[a:b] for a, b in s1)
        arg2 = " ".join(raw[a:b] for a, b in s2)
        yield {
            "doc_id": doc_id,
            "section": section,
            "relation_kind": relation_kind(raw, s1, s2),
            "arg1": " ".join(arg1.split()),
            "arg2": " ".join(arg2.split()),
            "labels": senses,
        }


def convert_tree(root: str | Path) -> Iterator[dict | str]:
    root = Path(root)
    gold_root = root / "gold"
    if not gold_root.is_dir():
        raise FileNotFoundError(f"{gold_root} is not a directory")
    for section_dir in sorted(p for p in gold_root.iterdir() if p.is_dir()):
        if not section_dir.name.isdigit():
            continue
        section = int(section_dir.name)
        for gold_path in sorted(section_dir.iterdir()):
            raw_path = root / "raw" / section_dir.name / gold_path.name
            if not raw_path.exists():
                yield f"{gold_path}: raw text {raw_path} missing"
                continue
            yield from convert_file(gold_path, raw_path, section, gold_path.name)
