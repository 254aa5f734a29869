import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpcommunity.graph import SizeLimitError, from_edges, generate_er, CommunityConfig, build_community_graph
from cpcommunity.graphical_log import (EventLog, bridge_arrow_duals, dual_infected, duality_check,
                                       exact_hit_probability, forward_infected, replay_monotone,
                                       sample_event_log)
from cpcommunity.rng import split_seed

# scipy.linalg.expm of hand-written generators, start {u}:
EDGE_HIT_LAM1_T1 = 0.26490401806479        # P(v infected at t=1), single edge
TRIANGLE_HIT_LAM1_T1 = 0.47128930077729425  # P(xi_1^{0} meets {1,2}), triangle


def _log(nv, recs=(), arrows=(), T=1.0):
    """Hand-built log: recs = [(v, t)], arrows = [(u, v, t)]."""
    rows = [(t, v, -1) for v, t in recs] + [(t, u, v) for u, v, t in arrows]
    rows.sort()
    edges = tuple(sorted({(u, v) for u, v, _ in arrows}))
    return EventLog(nv, T, 1.0, 0, np.array([r[0] for r in rows], dtype=float),
                    np.array([r[1] for r in rows], dtype=np.int64),
                    np.array([r[2] for r in rows], dtype=np.int64), edges)


def test_empty_streams(triangle):
    log = sample_event_log(triangle, 0.0, 5.0, 1)
    assert np.all(log.dst == -1)
    assert len(sample_event_log(triangle, 1.0, 0.0, 1)) == 0


def test_arrow_counts_poisson(edge):
    counts = [len(sample_event_log(edge, 2.0, 10.0, s).arrows(0, 1)) for s in range(1000)]
    assert abs(np.mean(counts) - 20.0) < 3 * np.sqrt(20.0 / 1000)


def test_log_times_sorted_and_in_window(triangle):
    log = sample_event_log(triangle, 1.5, 4.0, 3)
    assert np.all(np.diff(log.times) > 0)
    assert log.times.min() >= 0 and log.times.max() <= 4.0


def test_budget_guard():
    g = generate_er(200, 0.5, 1)
    with pytest.raises(SizeLimitError):
        sample_event_log(g, 10.0, 1000.0, 1)


def test_forward_hand_cases():
    log = _log(2, arrows=[(0, 1, 0.5)])
    assert forward_infected(log, {0}, 0.0) == {0}
    assert forward_infected(log, {0}, 1.0) == {0, 1}
    log = _log(2, recs=[(0, 0.3)], arrows=[(0, 1, 0.5)])
    assert forward_infected(log, {0}, 1.0) == set()


def test_dual_hand_cases():
    log = _log(3, recs=[(1, 0.2)])
    assert dual_infected(log, {0, 1}, 0.0) == {0, 1}
    assert dual_infected(log, {0, 1}, 1.0) == {0}
    log = _log(2, arrows=[(0, 1, 0.5)])
    assert dual_infected(log, {1}, 1.0) == {0, 1}


def test_window_guard(triangle):
    log = sample_event_log(triangle, 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        forward_infected(log, {0}, 2.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0.1, 2.0), st.floats(0.0, 3.0))
def test_pathwise_duality_and_additivity(seed, lam, t):
    g = generate_er(6, 0.5, seed % 1000)
    log = sample_event_log(g, lam, 3.0, seed)
    verts = range(6)
    for A in ({0}, {1, 2}, {3, 4, 5}):
        fa = forward_infected(log, A, t)
        for B in ({0}, {2, 5}):
            # an active path A -> B exists iff a dual path B -> A exists, on every log
            assert bool(fa & B) == bool(dual_infected(log, B, t) & A)
    assert forward_infected(log, {0, 1, 2}, t) == forward_infected(log, {0}, t) | forward_infected(log, {1, 2}, t)


def test_duality_singletons_triangle(triangle):
    for a, b in itertools.product(range(3), repeat=2):
        r = duality_check(triangle, 1.0, 1.0, {a}, {b}, 10**5, split_seed(9, 3 * a + b))
        assert abs(r.z_score) < 4


def test_duality_same_set(triangle):
    assert abs(duality_check(triangle, 1.0, 1.0, {0}, {0}, 20000, 1).z_score) < 4


def test_edge_duality_matches_oracle(edge):
    r = duality_check(edge, 1.0, 1.0, {0}, {1}, 10**5, 5)
    se = np.sqrt(EDGE_HIT_LAM1_T1 * (1 - EDGE_HIT_LAM1_T1) / 10**5)
    assert abs(r.p_forward - EDGE_HIT_LAM1_T1) < 3 * se
    assert abs(r.p_dual - EDGE_HIT_LAM1_T1) < 3 * se


def test_exact_hit_probability_oracles(edge, triangle):
    assert exact_hit_probability(edge, 1.0, 1.0, {0}, {1}) == pytest.approx(EDGE_HIT_LAM1_T1, abs=1e-12)
    assert exact_hit_probability(triangle, 1.0, 1.0, {0}, {1, 2}) == pytest.approx(TRIANGLE_HIT_LAM1_T1, abs=1e-12)


def test_replay_monotone():
    g = generate_er(5, 0.6, 1)
    rng = np.random.default_rng(0)
    for s in range(1000):
        log = sample_event_log(g, 1.0, 2.0, s)
        sup = set(np.flatnonzero(rng.random(5) < 0.6).tolist())
        sub = {v for v in sup if rng.random() < 0.5}
        assert replay_monotone(log, sub, sup, 2.0)
    assert replay_monotone(log, set(), {1}, 2.0)
    assert replay_monotone(log, {1}, {1}, 2.0)
    with pytest.raises(ValueError):
        replay_monotone(log, {1}, set(), 1.0)


def test_json_roundtrip(triangle):
    log = sample_event_log(triangle, 0.7, 2.0, 4)
    back = EventLog.from_json(log.to_json())
    assert np.array_equal(back.times, log.times)
    assert np.array_equal(back.src, log.src) and np.array_equal(back.dst, log.dst)
    assert "0->1" in log.to_json()


def test_bridge_arrow_duals_consistent():
    g = build_community_graph(CommunityConfig.two_community(6, 1, seed=2, p=0.6))
    (u, v), = g.bridges[(0, 1)].tolist()
    for s in range(30):
        log = sample_event_log(g, 1.0, 4.0, s)
        for Tk, dual, status in bridge_arrow_duals(log, (u, v), 1.0, A={0, 1, 2}):
            fwd = forward_infected(log, {0, 1, 2}, Tk - 1.0)
            assert status == bool(dual & fwd)
