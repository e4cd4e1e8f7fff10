import pytest
from hypothesis import given, strategies as st

from kerikernel.agreement import (
    AgreementParams, AgreementRecord, classify, immune_lower_bound, immune_split_check,
    immunity_table, judge,
)


def test_classify_examples():
    c = classify(4, 1)
    assert c.intact and list(c.immune_range) == [3]
    assert list(classify(12, 2).immune_range) == [8, 9, 10]
    c = classify(1, 0)
    assert c.intact and list(c.immune_range) == [1]
    c = classify(3, 1)
    assert 3 < 3 * 1 + 1 and list(c.immune_range) == []
    assert c.immune_lower == 3 and c.immune_upper == 2


def test_split_check_examples():
    assert immune_split_check(4, 1, 3)
    assert not immune_split_check(4, 1, 2)
    assert immune_split_check(7, 2, 5)


def test_params_validation():
    assert AgreementParams(4, 1, 3).immune
    assert not AgreementParams(4, 1, 2).immune
    with pytest.raises(ValueError):
        AgreementParams(4, 1, 5)


def test_judge():
    rec = AgreementRecord("E", 1, "d", frozenset({"a", "b", "c"}))
    assert judge(rec, AgreementParams(4, 1, 3)).sufficient
    empty = AgreementRecord("E", 1, "d", frozenset())
    assert not judge(empty, AgreementParams(1, 0, 1)).sufficient
    # witness rotation: only two of the old set receipted
    old, new = {"a", "b", "c", "d"}, {"a", "b", "e", "f"}
    rec = AgreementRecord("E", 2, "d", frozenset({"a", "b", "e", "f"}))
    j = judge(rec, AgreementParams(4, 1, 3), AgreementParams(4, 1, 3),
              witnesses=new, prev_witnesses=old)
    assert j.sufficient and j.jointly_confirmed is False
    j = judge(rec, AgreementParams(4, 1, 3), witnesses=new, threshold=5)
    assert j.accountable and not j.sufficient


def test_table_shape():
    rows = immunity_table(1)
    assert [r.N for r in rows] == [4, 5, 6, 7, 8, 9]
    assert all(r.three_f_plus_one == 4 for r in rows)


@given(st.integers(0, 4), st.integers(1, 30))
def test_immune_implies_intact(F, N):
    c = classify(N, F)
    if len(c.immune_range):
        assert N >= 2 * F + 1 and c.intact


@given(st.integers(0, 4), st.integers(1, 30))
def test_upper_bound_monotone(F, N):
    assert classify(N + 1, F).immune_upper >= classify(N, F).immune_upper


@given(st.integers(0, 3), st.integers(1, 9), st.data())
def test_oracle_matches_lower_bound(F, N, data):
    M = data.draw(st.integers(1, N))
    assert immune_split_check(N, F, M) == (M >= immune_lower_bound(N, F))
