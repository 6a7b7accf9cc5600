"""Directed attributed graphs."""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import GraphError


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph with real node and edge feature matrices.

    Attributes:
        node_features: n x d matrix
        edges: m x 2 integer matrix of (src, dst) node indices
        edge_features: m x c matrix aligned with ``edges``
        label: Optional class label
    """

    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        x = np.array(self.node_features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        ef = np.array(self.edge_features, dtype=np.float64)
        if ef.ndim != 2:
            ef = ef.reshape(-1, 1) if ef.size else np.zeros((e.shape[0], 0))
        elif ef.shape[1] == 0:
            ef = np.zeros((e.shape[0], 0))
        if x.ndim != 2:
            raise GraphError(f"node features must be a matrix, got shape {x.shape}")
        if ef.shape[0] != e.shape[0]:
            raise GraphError(f"{e.shape[0]} edges but {ef.shape[0]} edge feature rows")
        n = x.shape[0]
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError(f"edge endpoint out of range for a graph with {n} nodes")
        pairs = {(int(u), int(v)) for u, v in e}
        if len(pairs) != e.shape[0]:
            raise GraphError("duplicate directed edge")
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))
        for name, value in (("node_features", x), ("edges", e), ("edge_features", ef)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_lists(
        cls,
        node_features: Sequence[Sequence[float]],
        edges: Sequence[Tuple[int, int]],
        edge_features: Optional[Sequence[Sequence[float]]] = None,
        label: Optional[int] = None,
    ) -> "Graph":
        x = np.asarray(node_features, dtype=np.float64)
        if x.size == 0:
            x = x.reshape(len(node_features), 0)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edge_features is None:
            ef = np.zeros((e.shape[0], 0))
        else:
            ef = np.asarray(edge_features, dtype=np.float64).reshape(e.shape[0], -1)
        return cls(x, e, ef, label)

    @property
    def n(self) -> int:
        return self.node_features.shape[0]

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def d(self) -> int:
        return self.node_features.shape[1]

    @property
    def c(self) -> int:
        return self.edge_features.shape[1]

    @cached_property
    def edge_index(self) -> Dict[Tuple[int, int], int]:
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    @cached_property
    def successors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edge_index:
            out[u].append(v)
        return [sorted(s) for s in out]

    @cached_property
    def predecessors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edge_index:
            out[v].append(u)
        return [sorted(s) for s in out]

    def induced(self, keep: Sequence[int]) -> "Graph":
        """Subgraph on ``keep`` (sorted, re-indexed from 0) with the edges among them."""
        keep = sorted(set(int(i) for i in keep))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        if self.m:
            mask = (remap[self.edges[:, 0]] >= 0) & (remap[self.edges[:, 1]] >= 0)
            edges = remap[self.edges[mask]]
            edge_features = self.edge_features[mask]
        else:
            edges = np.zeros((0, 2), dtype=np.int64)
            edge_features = np.zeros((0, self.c))
        return Graph(self.node_features[keep], edges, edge_features, self.label)

    def with_label(self, label: Optional[int]) -> "Graph":
        return Graph(self.node_features, self.edges, self.edge_features, label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.label == other.label
            and self.node_features.shape == other.node_features.shape
            and self.edge_features.shape == other.edge_features.shape
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.edge_features, other.edge_features)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.m, self.label))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m}, d={self.d}, c={self.c}, label={self.label})"
