"""Prediction records and the decoding rules that need no model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from multisense.corpus import LABEL_INDEX, NUM_LABELS, SENSES

METHODS = ("m1", "m2", "m3", "baseline")
THRESHOLD = 0.5


def _as_array(probs) -> np.ndarray:
    if hasattr(probs, "detach"):
        probs = probs.detach().cpu().numpy()
    return np.asarray(probs)


def threshold_predict(probs: Sequence[float] | np.ndarray, tau: float = THRESHOLD) -> frozenset[int]:
    """Labels whose probability strictly exceeds ``tau``; may be empty."""
    return frozenset(int(i) for i in np.flatnonzero(_as_array(probs) > tau))


def argmax_predict(probs: Sequence[float] | np.ndarray) -> int:
    """Most probable label; ties go to the lowest index."""
    return int(np.argmax(_as_array(probs)))


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str
    method: str
    predicted: frozenset[int]
    probs: tuple[float, ...] | None = None  # absent for m3

    def to_json(self) -> str:
        obj = {
            "instance_id": self.instance_id,
            "method": self.method,
            "probs": None if self.probs is None else [float(p) for p in self.probs],
            "predicted": [SENSES[i] for i in sorted(self.predicted)],
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, line: str) -> PredictionRecord:
        obj = json.loads(line)
        try:
            predicted = frozenset(LABEL_INDEX[name] for name in obj["predicted"])
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r} in prediction for {obj.get('instance_id')}") from None
        method = obj.get("method", "m2")
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        probs = obj.get("probs")
        if probs is not None and len(probs) != NUM_LABELS:
            raise ValueError(f"expected {NUM_LABELS} probabilities, got {len(probs)}")
        return cls(obj["instance_id"], method, predicted, None if probs is None else tuple(float(p) for p in probs))
