"""Twelve-fold cross-validation plans.

Section-level folds rotate over the 25 WSJ sections with stride 2: fold ``i`` tests
on sections ``2i, 2i+1`` and develops on ``2i+2, 2i+3`` (all mod 25), training on
the remaining 21. Whole sections never straddle roles. With 12 folds one section
(24) is never tested; the plan records it in ``notes``.

Example-level folds stratify single-label instances by label and 2-label
instances by unordered pair into 12 portions; fold ``i`` tests on portion ``i``
and develops on portion ``i+1`` (mod 12).
"""

from __future__ import annotations

import json
import random
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from multisense.corpus import NUM_SECTIONS, Instance, corpus_digest, pair_key

NUM_FOLDS = 12
SECTION_LEVEL = "section-level"
EXAMPLE_LEVEL = "example-level"


@dataclass(frozen=True)
class FoldSpec:
    fold_id: int
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]
    train_sections: tuple[int, ...] = ()
    dev_sections: tuple[int, ...] = ()
    test_sections: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = {"fold_id": self.fold_id, "train": list(self.train), "dev": list(self.dev), "test": list(self.test)}
        if self.test_sections:
            d["sections"] = {
                "train": list(self.train_sections),
                "dev": list(self.dev_sections),
                "test": list(self.test_sections),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FoldSpec:
        sections = d.get("sections", {})
        return cls(
            fold_id=d["fold_id"],
            train=tuple(d["train"]),
            dev=tuple(d["dev"]),
            test=tuple(d["test"]),
            train_sections=tuple(sections.get("train", ())),
            dev_sections=tuple(sections.get("dev", ())),
            test_sections=tuple(sections.get("test", ())),
        )


@dataclass(frozen=True)
class SplitPlan:
    mode: str
    folds: tuple[FoldSpec, ...]
    seed: int
    corpus_digest: str
    notes: tuple[str, ...] = field(default=())

    def to_json(self) -> str:
        obj = {
            "mode": self.mode,
            "seed": self.seed,
            "corpus_digest": self.corpus_digest,
            "notes": list(self.notes),
            "folds": [f.to_dict() for f in self.folds],
        }
        return json.dumps(obj, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> SplitPlan:
        obj = json.loads(text)
        return cls(
            mode=obj["mode"],
            folds=tuple(FoldSpec.from_dict(f) for f in obj["folds"]),
            seed=obj["seed"],
            corpus_digest=obj["corpus_digest"],
            notes=tuple(obj.get("notes", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> SplitPlan:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def section_roles(fold_id: int) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """(train, dev, test) section numbers for one section-level fold."""
    test = ((2 * fold_id) % NUM_SECTIONS, (2 * fold_id + 1) % NUM_SECTIONS)
    dev = ((2 * fold_id + 2) % NUM_SECTIONS, (2 * fold_id + 3) % NUM_SECTIONS)
    train = tuple(s for s in range(NUM_SECTIONS) if s not in test and s not in dev)
    return train, dev, test


def section_folds(instances: Sequence[Instance], seed: int = 0) -> SplitPlan:
    """Section-level plan; ``seed`` is recorded but does not affect the result."""
    present = {inst.section for inst in instances}
    notes = []
    if len(present) < NUM_SECTIONS:
        missing = sorted(set(range(NUM_SECTIONS)) - present)
        warnings.warn(f"corpus covers {len(present)} of {NUM_SECTIONS} sections; missing {missing}")
        notes.append(f"missing sections: {missing}")
    folds = []
    tested: set[int] = set()
    for i in range(NUM_FOLDS):
        train_s, dev_s, test_s = section_roles(i)
        tested.update(test_s)
        role = {s: "train" for s in train_s} | {s: "dev" for s in dev_s} | {s: "test" for s in test_s}
        buckets: dict[str, list[str]] = {"train": [], "dev": [], "test": []}
        for inst in instances:
            buckets[role[inst.section]].append(inst.id)
        folds.append(
            FoldSpec(i, tuple(buckets["train"]), tuple(buckets["dev"]), tuple(buckets["test"]), train_s, dev_s, test_s)
        )
    untested = sorted(set(range(NUM_SECTIONS)) - tested)
    if untested:
        notes.append(f"sections never tested: {untested}")
    return SplitPlan(SECTION_LEVEL, tuple(folds), seed, corpus_digest(instances), tuple(notes))


def stratum_key(inst: Instance) -> str:
    if len(inst.labels) == 2:
        return "/".join(pair_key(*inst.labels))
    return inst.labels[0]


def deal_portions(instances: Sequence[Instance], rng: random.Random, n: int = NUM_FOLDS) -> list[list[str]]:
    """Stratified split into ``n`` portions.

    Strata are visited in sorted key order, each shuffled, then dealt out with a
    single round-robin cursor, so every stratum lands within one instance of an even
    share per portion and portion sizes differ by at most one.
    """
    strata: dict[str, list[Instance]] = defaultdict(list)
    for inst in instances:
        strata[stratum_key(inst)].append(inst)
    portions: list[list[str]] = [[] for _ in range(n)]
    cursor = 0
    for key in sorted(strata):
        members = [inst.id for inst in strata[key]]
        rng.shuffle(members)
        for inst_id in members:
            portions[cursor % n].append(inst_id)
            cursor += 1
    return portions


def example_portions(instances: Sequence[Instance], seed: int) -> list[list[str]]:
    rng = random.Random(seed)
    multi = [inst for inst in instances if len(inst.labels) == 2]
    single = [inst for inst in instances if len(inst.labels) == 1]
    multi_parts = deal_portions(multi, rng)
    single_parts = deal_portions(single, rng)
    return [m + s for m, s in zip(multi_parts, single_parts)]


def example_folds(instances: Sequence[Instance], seed: int) -> SplitPlan:
    """Stratified example-level plan, deterministic given ``seed``."""
    portions = example_portions(instances, seed)
    folds = []
    for i in range(NUM_FOLDS):
        dev_j = (i + 1) % NUM_FOLDS
        train = tuple(x for j, part in enumerate(portions) if j not in (i, dev_j) for x in part)
        folds.append(FoldSpec(i, train, tuple(portions[dev_j]), tuple(portions[i])))
    return SplitPlan(EXAMPLE_LEVEL, tuple(folds), seed, corpus_digest(instances))


def make_plan(instances: Sequence[Instance], mode: str, seed: int = 0) -> SplitPlan:
    if mode == SECTION_LEVEL:
        return section_folds(instances, seed)
    if mode == EXAMPLE_LEVEL:
        return example_folds(instances, seed)
    raise ValueError(f"unknown split mode {mode!r}")
