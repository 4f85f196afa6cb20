import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from refresh.errors import ConfigError, ValidationError
from refresh.grouping import (
    CorrelationGraph, CorrelationMatrix, GroupPartition, build_graph, group_features, louvain_partition,
    modularity, pearson_matrix,
)
from refresh.tabular import FeatureTable


def graph_from_edges(n, edges, tau=0.0):
    adj = tuple({} for _ in range(n))
    for i, j, w in edges:
        adj[i][j] = w
        adj[j][i] = w
    return CorrelationGraph(n, adj, tau)


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def modularity_oracle(A, groups):
    """Q = 1/2m * sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j], straight from the definition."""
    k = A.sum(axis=1)
    two_m = k.sum()
    label = np.empty(len(A), dtype=int)
    for c, g in enumerate(groups):
        label[g] = c
    same = label[:, None] == label[None, :]
    return float(((A - np.outer(k, k) / two_m) * same).sum() / two_m)


class TestPearson:
    def test_duplicate_and_negation(self, rng):
        x = rng.normal(size=200)
        table = FeatureTable(("x", "dup", "neg"), (x, x.copy(), -x))
        C = pearson_matrix(table).values
        assert C[0, 1] == 1.0
        assert C[0, 2] == -1.0
        assert np.allclose(C, C.T, atol=1e-12)

    def test_independent_columns_oracle(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal(10000), rng.standard_normal(10000)
        dx, dy = x - x.mean(), y - y.mean()
        oracle = float((dx * dy).sum() / np.sqrt((dx * dx).sum() * (dy * dy).sum()))
        rho = pearson_matrix(FeatureTable(("x", "y"), (x, y))).values[0, 1]
        assert rho == pytest.approx(oracle, abs=1e-12)
        assert abs(rho) < 0.05

    def test_constant_column_named(self):
        table = FeatureTable(("ok", "flat"), (np.arange(5.0), np.ones(5)))
        with pytest.raises(ValidationError, match="flat"):
            pearson_matrix(table)


class TestBuildGraph:
    def test_threshold_filter(self):
        C = np.array([[1, 0.9, 0.2], [0.9, 1, 0.1], [0.2, 0.1, 1]])
        g = build_graph(CorrelationMatrix(("a", "b", "c"), C), 0.7)
        assert g.edges() == [(0, 1, 0.9)]

    def test_extremes(self, rng):
        X = rng.normal(size=(50, 4))
        cm = pearson_matrix(FeatureTable.from_matrix(list("abcd"), X))
        assert build_graph(cm, 1.0).edges() == []
        assert len(build_graph(cm, 0.0).edges()) == 6

    def test_negative_correlation_counts(self):
        C = np.array([[1, -0.8], [-0.8, 1]])
        g = build_graph(CorrelationMatrix(("a", "b"), C), 0.7)
        assert g.edges() == [(0, 1, 0.8)]

    def test_tau_out_of_range(self):
        with pytest.raises(ConfigError):
            build_graph(CorrelationMatrix(("a",), np.ones((1, 1))), 1.5)


class TestLouvain:
    def test_edgeless_singletons(self):
        part = louvain_partition(graph_from_edges(5, []), seed=0)
        assert part.groups == tuple((i,) for i in range(5))

    def test_two_triangles_match_exhaustive_search(self):
        edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)]
        A = np.zeros((6, 6))
        for i, j, w in edges:
            A[i, j] = A[j, i] = w
        best = max(set_partitions(list(range(6))), key=lambda p: modularity_oracle(A, p))
        expected = tuple(sorted(tuple(sorted(g)) for g in best))
        assert expected == ((0, 1, 2), (3, 4, 5))
        for seed in range(5):
            assert louvain_partition(graph_from_edges(6, edges), seed=seed).groups == expected

    def test_bridged_triangles_match_exhaustive_search(self):
        edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0), (2, 3, 0.8)]
        A = np.zeros((6, 6))
        for i, j, w in edges:
            A[i, j] = A[j, i] = w
        best = max(set_partitions(list(range(6))), key=lambda p: modularity_oracle(A, p))
        part = louvain_partition(graph_from_edges(6, edges), seed=1)
        assert modularity_oracle(A, [list(g) for g in part.groups]) == pytest.approx(modularity_oracle(A, best))

    def test_deterministic_given_seed(self, planted):
        graph = build_graph(pearson_matrix(planted.table), 0.5)
        a = louvain_partition(graph, seed=9)
        b = louvain_partition(graph, seed=9)
        assert a.groups == b.groups

    def test_recovers_planted_groups(self, planted):
        part = group_features(planted.table, 0.7, seed=0)
        assert set(part.groups) == set(planted.groups)

    def test_modularity_agrees_with_networkx(self, planted):
        graph = build_graph(pearson_matrix(planted.table), 0.1)
        part = louvain_partition(graph, seed=2)
        G = nx.Graph()
        G.add_nodes_from(range(graph.n_nodes))
        G.add_weighted_edges_from(graph.edges())
        ref = nx.algorithms.community.modularity(G, [set(g) for g in part.groups], weight="weight")
        assert modularity(graph, part.groups) == pytest.approx(ref, abs=1e-12)


def random_graph(draw_seed, n, density):
    rng = np.random.default_rng(draw_seed)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                edges.append((i, j, float(rng.uniform(0.1, 1.0))))
    return graph_from_edges(n, edges)


graphs = st.builds(random_graph, st.integers(0, 2**32 - 1), st.integers(1, 25), st.floats(0.0, 0.6))


class TestPartitionProperties:
    @settings(max_examples=200, deadline=None)
    @given(graph=graphs, seed=st.integers(0, 1000))
    def test_disjoint_cover(self, graph, seed):
        part = louvain_partition(graph, seed=seed)
        assert part.covers(graph.n_nodes)
        assert all(len(g) > 0 for g in part.groups)

    @settings(max_examples=100, deadline=None)
    @given(graph=graphs, seed=st.integers(0, 1000))
    def test_modularity_non_decreasing_across_passes(self, graph, seed):
        hist = louvain_partition(graph, seed=seed).modularity_history
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))

    @settings(max_examples=100, deadline=None)
    @given(graph=graphs, seed=st.integers(0, 1000))
    def test_groups_within_components(self, graph, seed):
        comp_of = {}
        for c, comp in enumerate(graph.components()):
            for v in comp:
                comp_of[v] = c
        for g in louvain_partition(graph, seed=seed).groups:
            assert len({comp_of[v] for v in g}) == 1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.9), st.floats(0.0, 0.9))
    def test_threshold_monotonicity(self, seed, t1, t2):
        lo, hi = sorted((t1, t2))
        rng = np.random.default_rng(seed)
        latent = rng.normal(size=(80, 3))
        X = np.repeat(latent, 3, axis=1) + rng.normal(scale=0.8, size=(80, 9))
        cm = pearson_matrix(FeatureTable.from_matrix([f"x{j}" for j in range(9)], X))
        comp_of = {}
        for c, comp in enumerate(build_graph(cm, lo).components()):
            for v in comp:
                comp_of[v] = c
        for g in louvain_partition(build_graph(cm, hi), seed=0).groups:
            assert len({comp_of[v] for v in g}) == 1


def test_partition_json_round_trip(tmp_path):
    part = GroupPartition([[0, 2], [1]], tau=0.7, seed=3, names=("a", "b", "c"))
    path = tmp_path / "p.json"
    part.save(path)
    doc = json.loads(path.read_text())
    assert doc["tau"] == 0.7 and doc["seed"] == 3 and doc["groups"] == [["a", "c"], ["b"]]
    assert GroupPartition.load(path, ("a", "b", "c")).groups == part.groups


def test_partition_rejects_overlap():
    with pytest.raises(ValidationError):
        GroupPartition([[0, 1], [1, 2]])
