import json

import pytest

from multisense.corpus import parse_records

_CRITERIA: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """Record a named acceptance result (``ok=None`` for skipped); printed in the summary."""

    def record(name: str, ok: bool | None, detail: str = "") -> None:
        _CRITERIA[name] = ("SKIP" if ok is None else "PASS" if ok else "FAIL", detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        status, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())


def record_line(doc_id="wsj_0043", section=0, labels=("Cause",), arg1="it rained", arg2="the game stopped",
                kind="implicit-inter-sentential", **extra):
    obj = {"doc_id": doc_id, "section": section, "relation_kind": kind, "arg1": arg1, "arg2": arg2,
           "labels": list(labels)}
    obj.update(extra)
    return json.dumps(obj)


@pytest.fixture
def small_corpus():
    """Ten instances: 7 singles and 3 doubles over sections 0-4."""
    specs = [
        ("wsj_0001", 0, ["Cause"]), ("wsj_0001", 0, ["Conjunction"]), ("wsj_0102", 1, ["Cause", "Manner"]),
        ("wsj_0102", 1, ["Contrast"]), ("wsj_0203", 2, ["Purpose", "Manner"]), ("wsj_0203", 2, ["Cause"]),
        ("wsj_0304", 3, ["Level-of-detail"]), ("wsj_0304", 3, ["Asynchronous", "Concession"]),
        ("wsj_0405", 4, ["Instantiation"]), ("wsj_0405", 4, ["Cause"]),
    ]
    lines = [record_line(d, s, labels, arg1=f"first {k} text", arg2=f"second {k} text")
             for k, (d, s, labels) in enumerate(specs)]
    return parse_records(lines)
