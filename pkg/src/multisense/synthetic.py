"""Small separable corpora for smoke runs and overfit checks.

Each sense owns a few marker words; an instance's arguments contain the markers of
its gold senses among random filler, so the label set is recoverable from the text.
"""

from __future__ import annotations

import random

from multisense.corpus import NUM_LABELS, NUM_SECTIONS, RELATION_KINDS, SENSES, Instance

FILLER = ("the", "market", "said", "company", "shares", "year", "new", "price", "would", "report",
          "sales", "bank", "stock", "week", "group", "plan", "board", "quarter", "investors", "rate")


def marker(label: int, k: int) -> str:
    return f"mark{label}x{k}"


def _sentence(rng: random.Random, markers: list[str], length: int = 6) -> str:
    words = [rng.choice(FILLER) for _ in range(length)]
    for m in markers:
        words.insert(rng.randrange(len(words) + 1), m)
    return " ".join(words) + "."


def separable_corpus(n_single: int = 50, n_double: int = 14, seed: int = 0) -> list[Instance]:
    """Singles cycle through all senses; doubles cycle through pairs ``(i, i+5 mod 14)``."""
    rng = random.Random(seed)
    out = []
    for k in range(n_single + n_double):
        if k < n_single:
            labels = (k % NUM_LABELS,)
        else:
            i = (k - n_single) % NUM_LABELS
            labels = (i, (i + 5) % NUM_LABELS)
        first = [marker(labels[0], rng.randrange(3))]
        second = [marker(labels[-1], rng.randrange(3))]
        out.append(Instance(
            id=f"syn_{k:04d}#0",
            doc_id=f"syn_{k:04d}",
            section=k % NUM_SECTIONS,
            arg1=_sentence(rng, first),
            arg2=_sentence(rng, second),
            labels=tuple(SENSES[i] for i in labels),
            relation_kind=RELATION_KINDS[k % 2],
        ))
    return out
