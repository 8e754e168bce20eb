import numpy as np
import pytest

from tvdecopt.hard_instance import HardInstanceSC, NodeClass, node_class
from tvdecopt.span_oracle import (SpanState, communication_floor, communication_round, envelope,
                                  rounds_to_reach_last_coordinate, simulate, subgradient_phase,
                                  subgradient_transition)

CASES = [(3, 3), (6, 5), (9, 7), (12, 9)]


def brute_force_transition(cls, j, d, samples=50, seed=0):
    """Largest prefix reachable by one oracle call at points of K_j."""
    n = 3
    i = {NodeClass.V1: 0, NodeClass.V2: 1, NodeClass.V3: 2}[cls]
    oracle = HardInstanceSC(n=n, d=d, a=1.0, r=1.0).problem(M=10.0).oracles[i]
    rng = np.random.default_rng(seed)
    best = j
    for _ in range(samples):
        x = np.zeros(d)
        x[:j] = rng.standard_normal(j)
        g = oracle.subgradient(x)
        nz = np.nonzero(g)[0]
        if nz.size:
            best = max(best, int(nz[-1]) + 1)
    return best


def test_transition_examples():
    assert subgradient_transition(NodeClass.V1, 0) == 1
    assert subgradient_transition(NodeClass.V1, 2) == 2
    assert subgradient_transition(NodeClass.V2, 2) == 3
    assert subgradient_transition(NodeClass.V2, 0) == 0
    assert subgradient_transition(NodeClass.V3, 4) == 4


@pytest.mark.parametrize("cls", list(NodeClass))
def test_transition_matches_oracle(cls):
    d = 9
    for j in range(d + 1):
        assert subgradient_transition(cls, j, d) == brute_force_transition(cls, j, d), (cls, j)


def test_transition_rejects_out_of_range():
    with pytest.raises(ValueError):
        subgradient_transition(NodeClass.V1, -1)
    with pytest.raises(ValueError):
        subgradient_transition(NodeClass.V1, 6, d=5)


def test_communication_round_examples():
    s = SpanState.initial(6, 5)
    assert communication_round(s).j == (0,) * 6
    s = SpanState(6, 5, (2, 0, 0, 0, 1, 0), k=0)
    out = communication_round(s, center=5)
    assert out.j == (2, 1, 1, 1, 2, 1)
    assert out.k == 1


def test_default_center_rotates():
    s = SpanState(6, 5, (0, 0, 0, 0, 0, 3), k=0)
    # round 1 uses center 6 (1-based)
    assert communication_round(s).j == (3,) * 6


def test_initial_validation():
    with pytest.raises(ValueError):
        SpanState.initial(4, 3)
    with pytest.raises(ValueError):
        SpanState.initial(3, 4)


def test_subgradient_phase_saturates():
    s = subgradient_phase(SpanState.initial(3, 5))
    assert s.j == (2, 0, 0)
    assert s.subgradient_steps == 2


@pytest.mark.parametrize("n,d", CASES)
def test_lower_bound_and_envelope(n, d):
    trace = simulate(n, d)
    assert trace.envelope_violations == []
    assert trace.reached_at >= communication_floor(n, d)
    for st in trace.states:
        assert all(b >= a for a, b in zip(trace.states[0].j, st.j))
        assert max(st.j) <= d
        if st.k < communication_floor(n, d):
            assert max(st.j) <= d - 1
            assert np.all(np.array(st.j) <= envelope(n, st.k))


def test_exact_round_counts():
    assert rounds_to_reach_last_coordinate(3, 3) == 2
    assert [rounds_to_reach_last_coordinate(n, d) for n, d in CASES] == [2, 9, 20, 35]


def test_monotone_over_fixed_horizon():
    trace = simulate(6, 5, rounds=30)
    assert trace.states[-1].k == 30
    for a, b in zip(trace.states, trace.states[1:]):
        assert all(y >= x for x, y in zip(a.j, b.j))
        assert b.clock > a.clock


def test_envelope_values():
    np.testing.assert_array_equal(envelope(6, 0), [2, 2, 1, 1, 2, 1])
    np.testing.assert_array_equal(envelope(6, 1), [2, 2, 1, 1, 2, 2])
    assert communication_floor(6, 5) == 4
