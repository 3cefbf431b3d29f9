import pytest
from hypothesis import given, strategies as st

from ranslice.sched import InvalidAllocation, allocate_tti, edf_order, rbs_needed, rr_order
from ranslice.traffic import FlowQueue, Packet

from sched_fuzz import run_fuzz

EMBB, URLLC = 0, 1


def _urllc_queue(uid, deadline):
    q = FlowQueue(uid, URLLC)
    q.push(Packet(uid, deadline - 5, 256, 256, deadline))
    return q


def test_edf_examples():
    assert edf_order([_urllc_queue(2, 4), _urllc_queue(1, 2)]) == [(1, 2), (2, 4)]
    assert [u for u, _ in edf_order([_urllc_queue(3, 7), _urllc_queue(1, 7)])] == [1, 3]
    assert edf_order([FlowQueue(1, URLLC), FlowQueue(2, URLLC)]) == []


def test_rr_examples():
    assert rr_order([1, 2, 3], 1) == [2, 3, 1]
    assert rr_order([1, 2, 3], 3) == [1, 2, 3]
    assert rr_order([1, 2, 3], None) == [1, 2, 3]
    for cursor in (None, 0, 4, 9):
        assert rr_order([4], cursor) == [4]
    assert rr_order([], 2) == []


def test_rr_fairness_three_ttis():
    served = []
    cursor = None
    for _ in range(3):
        order = rr_order([1, 2, 3], cursor)
        a = allocate_tti({EMBB: 1}, 0, {u: 1e6 for u in order}, {u: 100.0 for u in order}, {EMBB: order})
        (ue,) = a.per_ue_rbs
        served.append(ue)
        cursor = order[0]
    assert sorted(served) == [1, 2, 3]


def test_two_phase_example():
    # eMBB UE 1 needs 150 RBs (50 hard + 100 residual), URLLC UE 2 needs 25 (10 hard + 15 residual)
    a = allocate_tti({EMBB: 50, URLLC: 10}, 40, {1: 150_000, 2: 25_000}, {1: 1000.0, 2: 1000.0},
                     {EMBB: [1], URLLC: [2]}, (URLLC, EMBB))
    assert a.per_slice_hard_used == {EMBB: 50, URLLC: 10}
    assert a.per_slice_common_used == {URLLC: 15, EMBB: 25}
    assert a.per_ue_rbs == {1: 75, 2: 25}


def test_no_backlog_zero_allocation():
    a = allocate_tti({EMBB: 50, URLLC: 10}, 40, {1: 0, 2: 0}, {1: 1000.0, 2: 1000.0},
                     {EMBB: [1], URLLC: [2]})
    assert a.per_ue_rbs == {} and a.total == 0


@given(st.integers(0, 30), st.integers(0, 30),
       st.dictionaries(st.integers(0, 9), st.tuples(st.integers(0, 50_000), st.floats(1, 2000)), max_size=10))
def test_zero_common_equals_hard_only(w_e, w_u, ues):
    demands = {u: d for u, (d, _) in ues.items()}
    rates = {u: r for u, (_, r) in ues.items()}
    orders = {EMBB: [u for u in sorted(ues) if u < 5], URLLC: [u for u in sorted(ues) if u >= 5]}
    a = allocate_tti({EMBB: w_e, URLLC: w_u}, 0, demands, rates, orders, (URLLC, EMBB))
    for m, w in ((EMBB, w_e), (URLLC, w_u)):
        alone = allocate_tti({m: w}, 0, demands, rates, {m: orders[m]})
        assert {u: r for u, r in a.per_ue_rbs.items() if u in orders[m]} == alone.per_ue_rbs
    assert sum(a.per_slice_common_used.values()) == 0


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20),
       st.dictionaries(st.integers(0, 9), st.tuples(st.integers(0, 50_000), st.floats(1, 2000)), max_size=10))
def test_allocation_invariants(w_e, w_u, w_c, ues):
    demands = {u: d for u, (d, _) in ues.items()}
    rates = {u: r for u, (_, r) in ues.items()}
    orders = {EMBB: [u for u in sorted(ues) if u < 5], URLLC: [u for u in sorted(ues) if u >= 5]}
    a = allocate_tti({EMBB: w_e, URLLC: w_u}, w_c, demands, rates, orders, (URLLC, EMBB))
    total = w_e + w_u + w_c
    need = {u: rbs_needed(demands[u], rates[u]) for u in ues}
    assert a.total == sum(a.per_ue_rbs.values()) <= total
    slice_need = {m: sum(need[u] for u in orders[m]) for m in orders}
    if sum(need.values()) >= total and slice_need[EMBB] >= w_e and slice_need[URLLC] >= w_u:
        assert a.total == total
    for m, w in ((EMBB, w_e), (URLLC, w_u)):
        assert a.per_slice_hard_used[m] <= w
        slice_rbs = sum(a.per_ue_rbs.get(u, 0) for u in orders[m])
        assert slice_rbs == a.per_slice_hard_used[m] + a.per_slice_common_used[m]
        if any(a.per_ue_rbs.get(u, 0) < need[u] for u in orders[m]):
            assert a.per_slice_hard_used[m] == w
    assert sum(a.per_slice_common_used.values()) <= w_c
    # URLLC strictly before eMBB on the common pool
    if a.per_slice_common_used[EMBB] > 0:
        assert all(a.per_ue_rbs.get(u, 0) == need[u] for u in orders[URLLC])


def test_rbs_needed():
    assert rbs_needed(0, 100.0) == 0
    assert rbs_needed(100, 100.0) == 1
    assert rbs_needed(101, 100.0) == 2
    assert rbs_needed(100, 0.0) == 0


def test_invalid_allocation():
    with pytest.raises(InvalidAllocation, match="invalid allocation"):
        allocate_tti({EMBB: -1}, 0, {}, {}, {EMBB: []})
    with pytest.raises(InvalidAllocation):
        allocate_tti({EMBB: 1}, -2, {}, {}, {EMBB: []})
    with pytest.raises(InvalidAllocation):
        allocate_tti({EMBB: 1}, 0, {1: -5}, {1: 10.0}, {EMBB: [1]})


def test_short_fuzz_clean():
    rep = run_fuzz(5_000, seed=11)
    assert rep.ttis == 5_000 and rep.total == 0, rep.violations
