"""Run-directory files: atomic writes, prediction files, manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from multisense.predictions import PredictionRecord


class ManifestMismatch(RuntimeError):
    """A stage input was produced under a different run manifest."""


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def write_predictions(path: str | Path, records: Iterable[PredictionRecord], header: dict | None = None) -> None:
    lines = []
    if header is not None:
        lines.append(json.dumps({"header": header}, sort_keys=True))
    lines.extend(r.to_json() for r in records)
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_predictions(path: str | Path) -> tuple[dict | None, list[PredictionRecord]]:
    """Header (if the first line carries one) and the records."""
    header = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh):
            if not line.strip():
                continue
            if k == 0 and line.lstrip().startswith('{"header"'):
                header = json.loads(line)["header"]
                continue
            records.append(PredictionRecord.from_json(line))
    return header, records


def write_jsonl(path: str | Path, rows: Sequence[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def read_manifest(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "manifest.json").read_text(encoding="utf-8"))


def check_digest(expected: str | None, found: str | None, what: str) -> None:
    if expected is not None and found is not None and expected != found:
        raise ManifestMismatch(f"{what} was produced under manifest {found[:12]}, expected {expected[:12]}")
