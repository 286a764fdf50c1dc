"""Weighted undirected interaction networks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .coupling import CouplingSpec
from .errors import DisconnectedGraph, InvalidNetwork, InvalidTarget


@dataclass(frozen=True)
class Node:
    id: str
    m: float = 1.0
    d: float = 1.0
    omega: float = 0.0
    measured: bool = True


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    weight: float = 1.0


@dataclass(frozen=True)
class Network:
    """Agents with inertia ``m``, damping ``d`` and natural velocity ``omega``
    coupled along weighted undirected edges.

    Edges are normalized so that ``i < j``. Construction fails for
    self-loops, duplicates, non-positive weights, disconnected graphs and
    networks without any measured node.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    coupling: CouplingSpec = field(default_factory=CouplingSpec)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        n = len(nodes)
        if n == 0:
            raise InvalidNetwork("network has no nodes")
        ids = [str(nd.id) for nd in nodes]
        if len(set(ids)) != n:
            raise InvalidNetwork("duplicate node ids")
        for nd in nodes:
            if not (nd.m >= 0 and np.isfinite(nd.m)):
                raise InvalidNetwork(f"node {nd.id}: inertia must be >= 0")
            if not (nd.d > 0 and np.isfinite(nd.d)):
                raise InvalidNetwork(f"node {nd.id}: damping must be > 0")
            if not np.isfinite(nd.omega):
                raise InvalidNetwork(f"node {nd.id}: omega must be finite")
        if not any(nd.measured for nd in nodes):
            raise InvalidNetwork("at least one node must be measured")

        seen = set()
        edges = []
        for e in self.edges:
            i, j = int(e.i), int(e.j)
            if i == j:
                raise InvalidNetwork(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidNetwork(f"edge ({i}, {j}) references a missing node")
            if not (e.weight > 0 and np.isfinite(e.weight)):
                raise InvalidNetwork(f"edge ({i}, {j}) has non-positive weight")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidNetwork(f"duplicate edge {key}")
            seen.add(key)
            edges.append(Edge(key[0], key[1], float(e.weight)))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(edges))

        if n > 1:
            ncomp, _ = connected_components(self._sparse_adjacency(), directed=False)
            if ncomp != 1:
                raise DisconnectedGraph(f"graph has {ncomp} connected components")

    def _sparse_adjacency(self):
        n = self.n
        i, j, w = self.edge_arrays
        return coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(str(nd.id) for nd in self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {nid: k for k, nid in enumerate(self.ids)}

    @property
    def m(self) -> np.ndarray:
        return np.array([nd.m for nd in self.nodes], dtype=float)

    @property
    def d(self) -> np.ndarray:
        return np.array([nd.d for nd in self.nodes], dtype=float)

    @property
    def omega(self) -> np.ndarray:
        return np.array([nd.omega for nd in self.nodes], dtype=float)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        i = np.array([e.i for e in self.edges], dtype=np.int64)
        j = np.array([e.j for e in self.edges], dtype=np.int64)
        w = np.array([e.weight for e in self.edges], dtype=float)
        return i, j, w

    @cached_property
    def _edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(e.i, e.j): k for k, e in enumerate(self.edges)}

    def adjacency(self) -> np.ndarray:
        return self._sparse_adjacency().toarray()

    def edge_index(self, i: int, j: int) -> int:
        """Position of edge {i, j} in ``edges``; raises InvalidTarget if absent."""
        key = (min(i, j), max(i, j))
        try:
            return self._edge_lookup[key]
        except KeyError:
            raise InvalidTarget(f"no edge between nodes {i} and {j}") from None

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edge_lookup

    def node_index(self, node) -> int:
        """Resolve a node id (str) or index (int) to an index."""
        if isinstance(node, (int, np.integer)) and not isinstance(node, bool):
            if 0 <= node < self.n:
                return int(node)
        elif str(node) in self.index:
            return self.index[str(node)]
        raise InvalidTarget(f"unknown node {node!r}")

    @property
    def measured(self) -> tuple[int, ...]:
        return tuple(k for k, nd in enumerate(self.nodes) if nd.measured)

    @property
    def unmeasured(self) -> tuple[int, ...]:
        return tuple(k for k, nd in enumerate(self.nodes) if not nd.measured)

    def centered_omega(self) -> tuple[np.ndarray, float]:
        """Natural velocities shifted to zero mean, and the removed offset."""
        w = self.omega
        offset = float(w.mean())
        return w - offset, offset

    def with_measured(self, measured) -> "Network":
        keep = {self.node_index(k) for k in measured}
        nodes = tuple(replace(nd, measured=k in keep) for k, nd in enumerate(self.nodes))
        return replace(self, nodes=nodes)

    def with_omega(self, omega) -> "Network":
        nodes = tuple(replace(nd, omega=float(w)) for nd, w in zip(self.nodes, omega))
        return replace(self, nodes=nodes)

    def neighbors(self, i: int) -> list[int]:
        return [e.j if e.i == i else e.i for e in self.edges if i in (e.i, e.j)]

    @classmethod
    def from_arrays(cls, edges, weights=None, n=None, m=1.0, d=1.0, omega=0.0,
                    measured=True, ids=None, coupling=None) -> "Network":
        """Convenience constructor from an edge list and per-node scalars or arrays."""
        edges = [tuple(map(int, e)) for e in edges]
        if n is None:
            n = 1 + max(max(e) for e in edges) if edges else 1
        if weights is None:
            weights = np.ones(len(edges))
        m = np.broadcast_to(np.asarray(m, dtype=float), (n,))
        d = np.broadcast_to(np.asarray(d, dtype=float), (n,))
        omega = np.broadcast_to(np.asarray(omega, dtype=float), (n,))
        measured = np.broadcast_to(np.asarray(measured, dtype=bool), (n,))
        ids = [str(k + 1) for k in range(n)] if ids is None else [str(s) for s in ids]
        nodes = tuple(Node(ids[k], float(m[k]), float(d[k]), float(omega[k]), bool(measured[k]))
                      for k in range(n))
        es = tuple(Edge(i, j, float(w)) for (i, j), w in zip(edges, weights))
        return cls(nodes, es, coupling or CouplingSpec())
