import random
import warnings
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisense.corpus import SENSES, Instance
from multisense.folds import (
    EXAMPLE_LEVEL, NUM_FOLDS, SECTION_LEVEL, SplitPlan, deal_portions, example_folds, example_portions, make_plan,
    section_folds, section_roles, stratum_key,
)


def corpus(n: int, seed: int = 0, all_sections: bool = True) -> list[Instance]:
    rng = random.Random(seed)
    out = []
    for k in range(n):
        labels = tuple(rng.sample(SENSES[:6], rng.choice((1, 1, 1, 2))))
        section = k % 25 if all_sections else rng.randrange(5)
        out.append(Instance(f"d{k}#0", f"d{k}", section, "a", "b", labels))
    return out


def test_section_roles_fold0():
    train, dev, test = section_roles(0)
    assert test == (0, 1) and dev == (2, 3)
    assert len(train) == 21


def test_section_roles_wraparound():
    train, dev, test = section_roles(11)
    assert test == (22, 23) and dev == (24, 0)
    assert 1 in train


def test_section_plan_never_tests_section_24():
    plan = section_folds(corpus(100))
    assert "sections never tested: [24]" in plan.notes
    assert all(24 not in f.test_sections for f in plan.folds)


def test_section_plan_warns_on_missing_sections():
    with pytest.warns(UserWarning, match="covers 5 of 25"):
        plan = section_folds(corpus(60, all_sections=False))
    assert any("missing sections" in n for n in plan.notes)


def test_section_plan_groups_by_section():
    insts = corpus(200)
    plan = section_folds(insts)
    section_of = {i.id: i.section for i in insts}
    for f in plan.folds:
        assert {section_of[i] for i in f.test} <= set(f.test_sections)
        assert {section_of[i] for i in f.dev} <= set(f.dev_sections)
        assert {section_of[i] for i in f.train} <= set(f.train_sections)


def test_section_plan_seed_independent():
    insts = corpus(100)
    a, b = section_folds(insts, seed=1), section_folds(insts, seed=2)
    assert a.folds == b.folds


def test_label_with_24_singles_gets_two_per_portion():
    insts = [Instance(f"x{k}#0", f"x{k}", 0, "a", "b", ("Cause",)) for k in range(24)]
    portions = deal_portions(insts, random.Random(0))
    assert [len(p) for p in portions] == [2] * 12


def test_pair_with_14_instances():
    insts = [Instance(f"x{k}#0", f"x{k}", 0, "a", "b", ("Purpose", "Manner")) for k in range(14)]
    sizes = sorted(len(p) for p in deal_portions(insts, random.Random(0)))
    assert sizes == [1] * 10 + [2] * 2


def test_stratum_key_unordered():
    a = Instance("a", "a", 0, "x", "y", ("Purpose", "Manner"))
    b = Instance("b", "b", 0, "x", "y", ("Manner", "Purpose"))
    assert stratum_key(a) == stratum_key(b)


def test_make_plan_rejects_unknown_mode():
    with pytest.raises(ValueError):
        make_plan(corpus(10), "random")


def test_plan_json_round_trip(tmp_path):
    for mode in (SECTION_LEVEL, EXAMPLE_LEVEL):
        plan = make_plan(corpus(80), mode, seed=3)
        plan.save(tmp_path / f"{mode}.json")
        back = SplitPlan.load(tmp_path / f"{mode}.json")
        assert back == plan
        assert back.to_json() == plan.to_json()


def check_disjoint_cover(plan, ids):
    for f in plan.folds:
        tr, dv, te = set(f.train), set(f.dev), set(f.test)
        assert not (tr & dv) and not (tr & te) and not (dv & te)
        assert tr | dv | te == ids
        assert len(f.train) + len(f.dev) + len(f.test) == len(ids)


@settings(max_examples=40, deadline=None)
@given(st.integers(12, 150), st.integers(0, 10_000))
def test_disjoint_and_covering_both_modes(n, seed):
    insts = corpus(n, seed)
    ids = {i.id for i in insts}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check_disjoint_cover(section_folds(insts), ids)
    check_disjoint_cover(example_folds(insts, seed), ids)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 150), st.integers(0, 10_000))
def test_example_level_each_instance_once_as_test_and_dev(n, seed):
    insts = corpus(n, seed)
    plan = example_folds(insts, seed)
    tests = Counter(i for f in plan.folds for i in f.test)
    devs = Counter(i for f in plan.folds for i in f.dev)
    assert set(tests.values()) == {1} and set(devs.values()) == {1}
    assert set(tests) == {i.id for i in insts}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 10_000))
def test_strata_balanced_within_one(n, seed):
    insts = corpus(n, seed)
    key_of = {i.id: stratum_key(i) for i in insts}
    portions = example_portions(insts, seed)
    assert len(portions) == NUM_FOLDS
    per = [Counter(key_of[i] for i in p) for p in portions]
    for key, total in Counter(key_of.values()).items():
        counts = [c[key] for c in per]
        assert max(counts) - min(counts) <= 1
        assert all(abs(c - total / NUM_FOLDS) < 1 for c in counts)
    sizes = [len(p) for p in portions]
    assert max(sizes) - min(sizes) <= 2  # one per stream


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 100), st.integers(0, 10_000))
def test_example_plan_deterministic(n, seed):
    insts = corpus(n, seed)
    assert example_folds(insts, seed).to_json() == example_folds(list(insts), seed).to_json()
