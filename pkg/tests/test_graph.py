import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpcommunity.graph import (CommunityConfig, Graph, SizeLimitError, build_community_graph,
                               degree_stats, edge_boundary, from_edges, generate_er,
                               isoperimetric_bound, isoperimetric_exact, isoperimetric_sampled,
                               validate_graph)
from conftest import complete

# P(Bin(1999, 0.1) outside [200 - 200^(2/3), 200 + 200^(2/3)]), scipy.stats.binom
DEG_TAIL_2000 = 0.010073941392087825


def test_er_complete_and_empty():
    assert generate_er(4, 1.0, 5).num_edges == 6
    assert generate_er(100, 0.0, 5).num_edges == 0


def test_er_edge_count_within_4sd():
    mean, sd = 499500 * 0.05, math.sqrt(499500 * 0.05 * 0.95)
    assert abs(generate_er(1000, 0.05, 7).num_edges - mean) < 4 * sd


def test_er_average_over_seeds():
    counts = [generate_er(200, 0.05, s).num_edges for s in range(100)]
    mean, sd = 19900 * 0.05, math.sqrt(19900 * 0.05 * 0.95)
    assert abs(np.mean(counts) - mean) < 4 * sd / 10


def test_er_pair_marginals_uniform():
    # every pair appears with probability p: chi-square-ish check on pair frequencies
    n, p, reps = 12, 0.3, 2000
    hits = np.zeros((n, n))
    for s in range(reps):
        for u, v in generate_er(n, p, s).edge_list():
            hits[u, v] += 1
    freq = hits[np.triu_indices(n, 1)] / reps
    assert np.all(np.abs(freq - p) < 5 * math.sqrt(p * (1 - p) / reps))


def test_er_rejects_bad_args():
    with pytest.raises(ValueError):
        generate_er(0, 0.5, 1)
    with pytest.raises(ValueError):
        generate_er(10, 1.5, 1)


def test_figure1_graph(figure1_graph):
    g = figure1_graph
    assert g.num_communities == 2 and g.num_vertices == 1000
    assert g.bridge_total == 2 and len(g.bridges[(0, 1)]) == 2
    validate_graph(g, [[0, 2], [2, 0]])


def test_single_community_has_no_bridges():
    g = build_community_graph(CommunityConfig(n=50, bridge_counts=[[0]], p=0.2, seed=1))
    assert g.bridge_total == 0 and g.num_communities == 1


def test_three_community_zero_count():
    cfg = CommunityConfig(n=100, bridge_counts=[[0, 1, 0], [1, 0, 1], [0, 1, 0]], p=0.3, seed=3)
    g = build_community_graph(cfg)
    validate_graph(g, cfg.bridge_counts)
    assert (0, 2) not in g.bridges or len(g.bridges[(0, 2)]) == 0
    comm = g.community_of
    for u, v in g.edge_list():
        assert {comm[u], comm[v]} != {0, 2}


def test_bridge_count_limit():
    with pytest.raises(ValueError):
        CommunityConfig(n=3, bridge_counts=[[0, 10], [10, 0]], p=0.5)
    with pytest.raises(ValueError):
        CommunityConfig(n=3, bridge_counts=[[0, 1], [2, 0]], p=0.5)
    with pytest.raises(ValueError):
        CommunityConfig(n=3, bridge_counts=[[0, 1], [1, 0]], a=1.5)


def test_all_cross_pairs_can_be_bridges():
    g = build_community_graph(CommunityConfig(n=3, bridge_counts=[[0, 9], [9, 0]], p=0.0, seed=2))
    assert g.bridge_total == 9


def test_a_parameter():
    cfg = CommunityConfig.two_community(100, 1, a=0.5)
    assert math.isclose(cfg.edge_prob, 0.1)


def test_regeneration_bit_identical():
    cfg = CommunityConfig(n=200, bridge_counts=[[0, 3], [3, 0]], p=0.05, seed=11)
    g1, g2 = build_community_graph(cfg), build_community_graph(cfg)
    assert g1.to_bytes() == g2.to_bytes()


def test_explicit_bridge_edges():
    cfg = CommunityConfig(n=10, bridge_counts=[[0, 1], [1, 0]], p=0.3, seed=1)
    g = build_community_graph(cfg, bridge_edges=[(2, 15)])
    assert g.bridges[(0, 1)].tolist() == [[2, 15]]


def test_degree_stats_k5_and_isolated():
    s = degree_stats(complete(5))
    assert s.min_degree == s.max_degree == 4 and s.mean_degree == 4
    g = from_edges([(0, 1)], community_size=3)
    assert degree_stats(g).min_degree == 0


def test_degree_concentration_er2000():
    g = generate_er(2000, 0.1, 3)
    s = degree_stats(g)
    assert s.min_degree <= s.mean_degree <= s.max_degree
    lo, hi = s.concentration_interval
    assert math.isclose(lo, 165.8, abs_tol=0.01) and math.isclose(hi, 234.2, abs_tol=0.01)
    se = math.sqrt(DEG_TAIL_2000 * (1 - DEG_TAIL_2000) / 2000)
    assert abs(s.fraction_outside - DEG_TAIL_2000) < 4 * se


def test_edge_boundary():
    assert edge_boundary(complete(4), {0}) == 3
    p4 = from_edges([(0, 1), (1, 2), (2, 3)])
    assert edge_boundary(p4, {0, 1}) == 1
    g = generate_er(50, 0.2, 1)
    assert edge_boundary(g, range(50)) == 0


def test_isoperimetric_exact_fixtures(path4):
    assert isoperimetric_exact(path4, 0.5) == 0.5
    assert isoperimetric_exact(complete(6), 1 / 6) == 5
    g = from_edges([(0, 1), (1, 2)], community_size=4)
    assert isoperimetric_exact(g, 0.25) == 0


def test_isoperimetric_exact_size_guard():
    with pytest.raises(SizeLimitError, match="isoperimetric_sampled"):
        isoperimetric_exact(generate_er(30, 0.3, 1), 0.5)


@pytest.mark.parametrize("m", [3, 5, 8])
def test_isoperimetric_complete(m):
    assert isoperimetric_exact(complete(m), 1 / m) == m - 1


def _brute(g, eps):
    import itertools
    nv = g.num_vertices
    best = math.inf
    for k in range(1, int(eps * nv + 1e-9) + 1):
        for U in itertools.combinations(range(nv), k):
            best = min(best, edge_boundary(g, U) / k)
    return best


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 9), st.floats(0.2, 0.8), st.integers(0, 2**32))
def test_isoperimetric_exact_matches_itertools(nv, p, seed):
    g = generate_er(nv, p, seed)
    assert isoperimetric_exact(g, 0.5) == pytest.approx(_brute(g, 0.5))


@settings(max_examples=15, deadline=None)
@given(st.integers(6, 12), st.integers(0, 2**32))
def test_sampled_never_undercuts_exact(nv, seed):
    g = generate_er(nv, 0.5, seed)
    exact = isoperimetric_exact(g, 0.5)
    seen, _ = isoperimetric_sampled(g, 0.5, 200, seed)
    assert seen >= exact - 1e-12


def test_isoperimetric_sampled_empty_graph():
    g = generate_er(20, 0.0, 1)
    assert isoperimetric_sampled(g, 0.5, 50, 1)[0] == 0


def test_isoperimetric_bound_value():
    assert math.isclose(isoperimetric_bound(200, 0.25), 150 - 200 ** (2 / 3))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(5, 30), st.floats(0.0, 0.5), st.integers(0, 2**64 - 1))
def test_generated_graphs_valid(N, n, p, seed):
    counts = np.zeros((N, N), dtype=int)
    rng = np.random.default_rng(seed % 2**32)
    for i in range(N):
        for j in range(i + 1, N):
            counts[i, j] = counts[j, i] = rng.integers(0, 4)
    cfg = CommunityConfig(n=n, bridge_counts=counts, p=p, seed=seed)
    g = build_community_graph(cfg)
    validate_graph(g, cfg.bridge_counts)
    assert np.array_equal(g.community_of, np.repeat(np.arange(N), n))


def test_validator_catches_problems():
    g = from_edges([(0, 1), (1, 2)])
    bad = Graph(1, 3, g.indptr, np.array([1, 1, 2, 1]), {})
    with pytest.raises(ValueError):
        validate_graph(bad)
    with pytest.raises(ValueError):
        from_edges([(0, 0)])
    with pytest.raises(ValueError):
        from_edges([(0, 1), (1, 0)])


def test_serialization_roundtrip(tmp_path):
    g = build_community_graph(CommunityConfig(n=40, bridge_counts=[[0, 2, 1], [2, 0, 0], [1, 0, 0]],
                                              p=0.2, seed=9))
    for name in ("g.txt", "g.bin"):
        path = tmp_path / name
        g.save(path)
        h = Graph.load(path)
        assert h.to_bytes() == g.to_bytes()
        assert h.num_communities == 3 and h.bridge_total == 3
    text = g.to_text()
    assert text.splitlines()[0].split()[:3] == ["communities", "3", "40"]
    assert Graph.from_text(text).to_text() == text


def test_binary_layout():
    g = from_edges([(0, 1), (1, 2)], num_communities=1, community_size=3, p=0.5)
    data = g.to_bytes()
    assert data[:8] == b"CPGRAPH1"
    assert len(data) == 8 + 5 * 8 + 2 * 16


@pytest.mark.parametrize("p", [5e-324, 1e-300, 1e-20])
def test_er_tiny_p_terminates(p):
    assert generate_er(30, p, 1).num_edges == 0
