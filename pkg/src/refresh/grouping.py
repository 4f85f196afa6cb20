"""Correlation graph construction and Louvain community detection.

Features whose absolute Pearson correlation reaches a threshold are joined by
an edge weighted by ``|rho|``; the Louvain communities of that graph form a
disjoint partition of all features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputFormatError, ValidationError
from .tabular import FeatureTable

SCHEMA_VERSION = 1

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple
    values: np.ndarray

    @property
    def n(self):
        return len(self.names)


@dataclass(frozen=True)
class CorrelationGraph:
    """Undirected weighted graph; ``adjacency[i]`` maps neighbour -> weight."""

    n_nodes: int
    adjacency: tuple
    tau: float

    def edges(self):
        return [(i, j, w) for i, nbrs in enumerate(self.adjacency) for j, w in nbrs.items() if i < j]

    def components(self):
        """Connected components as a list of sorted node lists."""
        seen = np.zeros(self.n_nodes, dtype=bool)
        comps = []
        for start in range(self.n_nodes):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple
    tau: float = float("nan")
    seed: int = 0
    names: tuple = ()
    modularity_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        groups = tuple(sorted(groups, key=lambda g: g[0] if g else -1))
        if any(len(g) == 0 for g in groups):
            raise ValidationError("partition contains an empty group")
        flat = [i for g in groups for i in g]
        if len(flat) != len(set(flat)):
            raise ValidationError("partition groups overlap")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_features(self):
        return sum(len(g) for g in self.groups)

    def __len__(self):
        return len(self.groups)

    def group_of(self):
        """Array mapping feature index -> group id."""
        out = np.empty(self.n_features, dtype=int)
        for gid, g in enumerate(self.groups):
            out[list(g)] = gid
        return out

    def covers(self, n_features):
        return sorted(i for g in self.groups for i in g) == list(range(n_features))

    def to_dict(self):
        if not self.names:
            raise ValueError("partition carries no feature names")
        return {
            "schema_version": SCHEMA_VERSION,
            "tau": self.tau,
            "seed": self.seed,
            "groups": [[self.names[i] for i in g] for g in self.groups],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path, names):
        try:
            doc = json.loads(Path(path).read_text())
            index = {n: i for i, n in enumerate(names)}
            groups = [[index[n] for n in g] for g in doc["groups"]]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputFormatError(f"{path}: not a partition document ({exc})") from exc
        part = cls(groups, tau=doc.get("tau", float("nan")), seed=doc.get("seed", 0), names=tuple(names))
        if not part.covers(len(names)):
            raise InputFormatError(f"{path}: groups do not cover every feature")
        return part


def pearson_matrix(table: FeatureTable) -> CorrelationMatrix:
    X = table.matrix()
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc
    diag = np.diag(S).copy()
    for j, name in enumerate(table.names):
        if not diag[j] > 0:
            raise ValidationError(f"column {name!r} is constant; drop it before computing correlations")
    C = S / np.sqrt(np.outer(diag, diag))
    C = np.clip((C + C.T) / 2, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    C.setflags(write=False)
    return CorrelationMatrix(table.names, C)


def build_graph(matrix: CorrelationMatrix, tau: float) -> CorrelationGraph:
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    A = np.abs(matrix.values)
    n = matrix.n
    adjacency = tuple({} for _ in range(n))
    ii, jj = np.nonzero(A >= tau)
    for i, j in zip(ii.tolist(), jj.tolist()):
        if i != j:
            adjacency[i][j] = float(A[i, j])
    return CorrelationGraph(n, adjacency, float(tau))


def modularity(graph: CorrelationGraph, groups, resolution=1.0) -> float:
    """Newman modularity of a partition given as a list of node collections."""
    degree = np.array([sum(nbrs.values()) for nbrs in graph.adjacency])
    two_m = degree.sum()
    if two_m == 0:
        return 0.0
    q = 0.0
    for g in groups:
        members = set(g)
        internal = sum(w for i in members for j, w in graph.adjacency[i].items() if j in members)
        tot = degree[list(members)].sum()
        q += internal / two_m - resolution * (tot / two_m) ** 2
    return float(q)


def _local_moves(adj, degree, two_m, resolution, order):
    """Phase one: greedy node moves. Returns (community labels, any_move)."""
    n = len(adj)
    comm = np.arange(n)
    tot = degree.astype(float).copy()
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order:
            ki = degree[i]
            if ki == 0:
                continue
            own = comm[i]
            links = {}
            for j, w in adj[i].items():
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[own] -= ki
            scale = resolution * ki / two_m
            stay_gain = links.get(own, 0.0) - scale * tot[own]
            best_gain, best = stay_gain, own
            for c in sorted(links):
                gain = links[c] - scale * tot[c]
                if gain > best_gain + _GAIN_EPS:
                    best_gain, best = gain, c
            tot[best] += ki
            if best != own:
                comm[i] = best
                improved = True
                moved_any = True
    return comm, moved_any


def _aggregate(adj, comm):
    labels = {c: k for k, c in enumerate(sorted(set(comm.tolist())))}
    new_adj = [dict() for _ in labels]
    for i, nbrs in enumerate(adj):
        ci = labels[comm[i]]
        for j, w in nbrs.items():
            cj = labels[comm[j]]
            new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
    return new_adj, np.array([labels[c] for c in comm.tolist()])


def louvain_partition(graph: CorrelationGraph, seed=0, resolution=1.0, names=()) -> GroupPartition:
    """Two-phase Louvain: local moves to the best modularity gain, then
    aggregation, repeated until a level produces no move.

    Nodes are visited in a seeded random order; among equal gains the move
    target with the lowest community index wins, and a node only leaves its
    community for a strictly positive gain. Isolated nodes stay singletons.
    """
    n = graph.n_nodes
    rng = np.random.default_rng(seed)
    # self-loops at aggregated levels carry the full internal weight (both directions)
    adj = [dict(nbrs) for nbrs in graph.adjacency]
    membership = np.arange(n)
    history = [modularity(graph, [[i] for i in range(n)], resolution)]
    while True:
        degree = np.array([sum(nbrs.values()) for nbrs in adj])
        two_m = degree.sum()
        if two_m == 0:
            break
        order = rng.permutation(len(adj)).tolist()
        comm, moved = _local_moves(adj, degree, two_m, resolution, order)
        if not moved:
            break
        adj, relabel = _aggregate(adj, comm)
        membership = relabel[membership]
        groups = [np.flatnonzero(membership == c).tolist() for c in range(len(adj))]
        history.append(modularity(graph, groups, resolution))
    groups = [np.flatnonzero(membership == c).tolist() for c in sorted(set(membership.tolist()))]
    return GroupPartition(groups, tau=graph.tau, seed=seed, names=tuple(names),
                          modularity_history=tuple(history))


def group_features(table: FeatureTable, tau=0.7, seed=0, resolution=1.0) -> GroupPartition:
    graph = build_graph(pearson_matrix(table), tau)
    return louvain_partition(graph, seed=seed, resolution=resolution, names=table.names)
