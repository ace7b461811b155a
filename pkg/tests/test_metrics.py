import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisense.corpus import Instance
from multisense.metrics import (
    MULTI_LABEL, SINGLE_LABEL, AlignmentError, MetricsReport, Stat, aggregate, align, confusion, cooccurrence,
    count_table, evaluate_records, evaluate_sets, format_aggregate, format_count_table, format_pair_map, hamming,
    macro_prf, multilabel_breakdown, overprediction_matrix, single_criterion_counts, single_criterion_eval,
    underprediction_matrix,
)
from multisense.predictions import PredictionRecord
from oracles import random_case, two_pass_std

CAUSE, MANNER, PURPOSE, CONTRAST = 2, 10, 5, 1
A, B, C = 0, 1, 2
f = frozenset


def test_confusion_examples():
    c = confusion([f({CAUSE, MANNER})], [f({CAUSE})])
    assert c.tp[CAUSE] == 1 and c.fp[MANNER] == 1 and c.fn.sum() == 0
    c = confusion([f()], [f({A, B})])
    assert c.fn[A] == c.fn[B] == 1 and c.tp.sum() == 0


def test_prf_hand_example():
    preds = [f({A}), f({A}), f({A})]
    golds = [f({A}), f({A}), f({B})]
    prf = macro_prf(confusion(preds, golds))
    assert prf.precision[A] == pytest.approx(2 / 3)
    assert prf.recall[A] == 1.0
    assert prf.f1[A] == pytest.approx(0.8)


def test_zero_denominator_label_contributes_zero():
    prf = macro_prf(confusion([f({A})], [f({A})]))
    assert prf.precision[3] == prf.recall[3] == prf.f1[3] == 0.0
    assert prf.macro_f1 == pytest.approx(1 / 14)


def test_hamming_examples():
    assert hamming([f({A})], [f({A})]) == 0
    assert hamming([f({CAUSE, MANNER})], [f({CAUSE})]) == pytest.approx(1 / 14)


def test_single_criterion_examples():
    c = single_criterion_counts([CAUSE], [f({CAUSE, MANNER})])
    assert c.tp[CAUSE] == 1 and c.fn[MANNER] == 0
    c = single_criterion_counts([CONTRAST], [f({CAUSE})])
    assert c.fp[CONTRAST] == 1 and c.fn[CAUSE] == 1
    c = single_criterion_counts([CONTRAST], [f({CAUSE, MANNER})])
    assert c.fn[CAUSE] == c.fn[MANNER] == 1
    c = single_criterion_counts([CONTRAST], [f({CAUSE, MANNER})], fn_per_gold=False)
    assert c.fn[CAUSE] == 1 and c.fn[MANNER] == 0


def test_count_table_example():
    golds = [f({1}), f({2}), f({3}), f({4, 5}), f({6, 7})]
    t = count_table(golds, golds)
    assert t[1, 0] == 3 and t[2, 1] == 2 and t.sum() == 5


def test_count_table_overflow_row():
    t = count_table([f({1, 2, 3})], [f({1})])
    assert t[3, 0] == 1


def test_breakdown_examples():
    gold = f({A, B})
    b = multilabel_breakdown([f({A, B}), f({A, C}), f({C}), f(), f({A, B, C}), f({A})], [gold] * 6)
    assert (b.both_correct, b.one_correct, b.both_incorrect, b.no_prediction, b.flagged) == (1, 3, 1, 1, 1)
    assert sum(b.percentages().values()) == pytest.approx(100)


def test_cooccurrence_example():
    m = cooccurrence([f({A, B}), f({A, B}), f({A, C}), f({A})])
    assert m[A, B] == 2 and m[A, C] == 1
    assert (m == m.T).all() and (np.diag(m) == 0).all()


def test_under_and_over_prediction_examples():
    u = underprediction_matrix([f({PURPOSE}), f({PURPOSE, MANNER})], [f({PURPOSE, MANNER})] * 2)
    assert u == {(PURPOSE, MANNER, PURPOSE): 1}
    o = overprediction_matrix([f({PURPOSE, MANNER})], [f({PURPOSE})])
    assert o == {(PURPOSE, PURPOSE, MANNER): 1}


def test_align_errors():
    inst = [Instance("a", "a", 0, "x", "y", ("Cause",))]
    rec = PredictionRecord("a", "m1", f({2}))
    assert align([rec], inst)[1] == [f({2})]
    with pytest.raises(AlignmentError, match="unknown"):
        align([PredictionRecord("b", "m1", f())], inst)
    with pytest.raises(AlignmentError, match="duplicate"):
        align([rec, rec], inst)
    with pytest.raises(AlignmentError, match="no prediction"):
        align([], inst)


def test_evaluate_records_hand_oracle():
    insts = [
        Instance("i0", "d", 0, "x", "y", ("Cause",)),
        Instance("i1", "d", 0, "x", "y", ("Cause", "Manner")),
        Instance("i2", "d", 0, "x", "y", ("Contrast",)),
        Instance("i3", "d", 0, "x", "y", ("Purpose", "Manner")),
        Instance("i4", "d", 0, "x", "y", ("Cause",)),
    ]
    recs = [
        PredictionRecord("i0", "m2", f({CAUSE})),
        PredictionRecord("i1", "m2", f({CAUSE})),
        PredictionRecord("i2", "m2", f({CAUSE, CONTRAST})),
        PredictionRecord("i3", "m2", f({PURPOSE, MANNER})),
        PredictionRecord("i4", "m2", f()),
    ]
    rep = evaluate_records(recs, insts)
    # Cause: tp 2 (i0,i1), fp 1 (i2), fn 1 (i4)
    assert rep.precision[CAUSE] == pytest.approx(2 / 3) and rep.recall[CAUSE] == pytest.approx(2 / 3)
    # Manner: tp 1 (i3), fn 1 (i1)
    assert rep.precision[MANNER] == 1.0 and rep.recall[MANNER] == 0.5
    assert rep.hamming == pytest.approx((0 + 1 + 1 + 0 + 1) / 70)
    assert rep.count_table == [[1, 0], [1, 1], [1, 1], [0, 0]]
    assert rep.breakdown["both_correct"] == 1 and rep.breakdown["one_correct"] == 1
    single = evaluate_records(recs[:4] + [PredictionRecord("i4", "m2", f({CONTRAST}))], insts, SINGLE_LABEL)
    assert single.criterion == SINGLE_LABEL and single.hamming is None


def test_evaluate_records_single_prefers_probs():
    insts = [Instance("i0", "d", 0, "x", "y", ("Cause",))]
    probs = [0.0] * 14
    probs[CAUSE] = 0.4
    rep = evaluate_records([PredictionRecord("i0", "m1", f(), tuple(probs))], insts, SINGLE_LABEL)
    assert rep.f1[CAUSE] == 1.0
    with pytest.raises(ValueError, match="neither"):
        evaluate_records([PredictionRecord("i0", "m3", f())], insts, SINGLE_LABEL)


def test_single_criterion_eval_argmax():
    probs = [[1 / 14] * 14]
    prf = single_criterion_eval(probs, [f({0, 5})])
    assert prf.precision[0] == 1.0


def fold_report(f1s, digest="d", crit=MULTI_LABEL):
    return MetricsReport(crit, 3, list(f1s), list(f1s), list(f1s), hamming=0.05, count_table=[[0, 0]] * 4,
                         breakdown={"both_correct": 1}, cooccurrence_gold=np.zeros((14, 14), int).tolist(),
                         cooccurrence_pred=np.zeros((14, 14), int).tolist(), underprediction=[[0, 1, 0, 2]],
                         overprediction=[], manifest_digest=digest)


def test_aggregate_identical_scores():
    agg = aggregate([fold_report([0.5] * 14)] * 12)
    assert agg.macro_f1.mean == pytest.approx(0.5) and agg.macro_f1.std == 0
    assert agg.underprediction == [[0, 1, 0, 24]]
    assert agg.breakdown["both_correct"] == 12


def test_aggregate_two_pass_oracle():
    scores = [0.50 + 0.02 * k for k in range(12)]
    agg = aggregate([fold_report([s] * 14) for s in scores])
    mean, std = two_pass_std(scores)
    _, sstd = two_pass_std(scores, ddof=1)
    assert abs(agg.macro_f1.mean - mean) < 1e-9
    assert abs(agg.macro_f1.std - std) < 1e-9
    assert abs(agg.macro_f1.sample_std - sstd) < 1e-9


def test_aggregate_errors():
    with pytest.raises(ValueError, match="at least 2"):
        aggregate([fold_report([0.5] * 14)])
    with pytest.raises(ValueError, match="manifests"):
        aggregate([fold_report([0.5] * 14, "a"), fold_report([0.5] * 14, "b")])
    with pytest.raises(ValueError, match="mixed"):
        aggregate([fold_report([0.5] * 14), fold_report([0.5] * 14, crit=SINGLE_LABEL)])


def test_report_json_round_trip_and_reaggregation_idempotent():
    reps = [evaluate_sets(*random_case(random.Random(k)), manifest_digest="x", fold_id=k)
            for k in range(3)]
    back = [MetricsReport.from_json(r.to_json()) for r in reps]
    assert back == reps
    assert format_aggregate(aggregate(back)) == format_aggregate(aggregate(reps))


def test_formatters_carry_digest():
    assert "# manifest abc" in format_count_table([[0, 1], [2, 3], [4, 5], [0, 0]], "abc")
    assert "Purpose/Manner" in format_pair_map([[5, 10, 5, 3]], True, "abc")
    assert "Purpose/Manner" in format_pair_map([[5, 5, 10, 3]], False, "abc")


label_sets = st.sets(st.integers(0, 13), min_size=0, max_size=3).map(frozenset)
gold_sets = st.sets(st.integers(0, 13), min_size=1, max_size=2).map(frozenset)
cases = st.lists(st.tuples(label_sets, gold_sets), min_size=1, max_size=40)


@settings(max_examples=100, deadline=None)
@given(cases, st.randoms())
def test_permutation_invariance(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate_sets([p for p, _ in pairs], [g for _, g in pairs])
    b = evaluate_sets([p for p, _ in shuffled], [g for _, g in shuffled])
    assert a == b


@settings(max_examples=100, deadline=None)
@given(cases)
def test_table_consistency(pairs):
    preds, golds = [p for p, _ in pairs], [g for _, g in pairs]
    rep = evaluate_sets(preds, golds)
    t = np.array(rep.count_table)
    assert t.sum() == len(pairs)
    assert sum(r[-1] for r in rep.underprediction) == t[1, 1]
    assert sum(r[-1] for r in rep.overprediction) == t[2, 0]
    assert sum(v for k, v in rep.breakdown.items() if k != "flagged") == t[:, 1].sum()
    assert np.array(rep.cooccurrence_pred).sum() == 2 * t[2, :].sum()
    assert rep.macro_f1 == pytest.approx(float(np.mean(rep.f1)), abs=1e-9)
    assert all(0 <= v <= 1 for v in rep.precision + rep.recall + rep.f1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=12))
def test_stat_matches_two_pass(values):
    s = Stat.of(values)
    mean, std = two_pass_std(values)
    assert abs(s.mean - mean) < 1e-9 and abs(s.std - std) < 1e-9
