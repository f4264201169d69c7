"""Hypergraph storage: dual incidence lists, degrees, perturbation, feedback update."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateIncidence,
    EmptyHyperedge,
    NotIncident,
    UndersizedHyperedge,
    UnknownNode,
)


class NodeKind(str, Enum):
    USER = "user"
    ITEM = "item"


class EdgeTag(str, Enum):
    SOCIAL_CIRCLE = "social_circle"
    POI_REGION = "poi_region"
    FAN_CIRCLE = "fan_circle"
    BRAND = "brand"
    CATEGORY = "category"
    # singleton fallback for nodes without side information
    SELF_USER = "self_user"
    SELF_ITEM = "self_item"

    @property
    def is_singleton(self) -> bool:
        return self in (EdgeTag.SELF_USER, EdgeTag.SELF_ITEM)

    @property
    def side(self) -> NodeKind:
        """Which kind of node this tag's hyperedges describe."""
        if self in (EdgeTag.SOCIAL_CIRCLE, EdgeTag.FAN_CIRCLE, EdgeTag.SELF_USER):
            return NodeKind.USER
        return NodeKind.ITEM


SELF_TAG = {NodeKind.USER: EdgeTag.SELF_USER, NodeKind.ITEM: EdgeTag.SELF_ITEM}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Hypergraph:
    """Immutable node/hyperedge incidence stored in both orientations.

    Use :func:`build_hypergraph` rather than calling the constructor directly;
    the constructor trusts its input.
    """

    def __init__(
        self,
        node_kinds: Sequence[NodeKind],
        edge_tags: Sequence[EdgeTag],
        members: Sequence[np.ndarray],
        edge_names: Sequence[str] | None = None,
    ):
        self.node_kinds = tuple(NodeKind(k) for k in node_kinds)
        self.edge_tags = tuple(EdgeTag(t) for t in edge_tags)
        self._members = tuple(_frozen(np.sort(np.asarray(m, dtype=np.int64))) for m in members)
        if edge_names is None:
            edge_names = [f"e{i}" for i in range(len(self._members))]
        self.edge_names = tuple(edge_names)

        n = len(self.node_kinds)
        buckets: list[list[int]] = [[] for _ in range(n)]
        for e, mem in enumerate(self._members):
            for x in mem:
                buckets[x].append(e)
        self._node_edges = tuple(_frozen(np.asarray(b, dtype=np.int64)) for b in buckets)
        self.node_degrees = _frozen(np.array([len(b) for b in buckets], dtype=np.int64))
        self.edge_degrees = _frozen(np.array([len(m) for m in self._members], dtype=np.int64))

    # -- basic queries -------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.node_kinds)

    @property
    def n_edges(self) -> int:
        return len(self._members)

    def _check_node(self, x: int) -> None:
        if not 0 <= x < self.n_nodes:
            raise UnknownNode(f"node {x} not in hypergraph of {self.n_nodes} nodes")

    def _check_edge(self, e: int) -> None:
        if not 0 <= e < self.n_edges:
            raise KeyError(f"hyperedge {e} not in hypergraph of {self.n_edges} edges")

    def members(self, e: int) -> np.ndarray:
        self._check_edge(e)
        return self._members[e]

    def edges_of(self, x: int) -> np.ndarray:
        self._check_node(x)
        return self._node_edges[x]

    def is_incident(self, x: int, e: int) -> bool:
        mem = self.members(e)
        self._check_node(x)
        i = np.searchsorted(mem, x)
        return bool(i < len(mem) and mem[i] == x)

    def adjacent(self, x: int, y: int) -> bool:
        """True iff some hyperedge contains both nodes."""
        ex, ey = self.edges_of(x), self.edges_of(y)
        return bool(np.intersect1d(ex, ey, assume_unique=True).size)

    def nodes_of_kind(self, kind: NodeKind) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.node_kinds) if k == kind], dtype=np.int64)

    def incidence_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(node, edge) index arrays of every stored incidence, edge-major."""
        if not self.n_edges:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        nodes = np.concatenate(self._members)
        edges = np.repeat(np.arange(self.n_edges), self.edge_degrees)
        return nodes, edges

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.n_nodes, self.n_edges), dtype=np.int8)
        nodes, edges = self.incidence_pairs()
        h[nodes, edges] = 1
        return h

    def tag_counts(self) -> dict[EdgeTag, int]:
        counts: dict[EdgeTag, int] = {}
        for t in self.edge_tags:
            counts[t] = counts.get(t, 0) + 1
        return counts

    # -- sparse operators used by the encoder --------------------------
    @cached_property
    def incidence(self) -> sp.csr_matrix:
        nodes, edges = self.incidence_pairs()
        data = np.ones(len(nodes))
        return sp.csr_matrix((data, (nodes, edges)), shape=(self.n_nodes, self.n_edges))

    @cached_property
    def edge_mean_operator(self) -> sp.csr_matrix:
        """De^-1 H^T, shape (edges, nodes)."""
        inv = _safe_inverse(self.edge_degrees)
        return (sp.diags(inv) @ self.incidence.T).tocsr()

    @cached_property
    def node_mean_operator(self) -> sp.csr_matrix:
        """Dv^-1 H, shape (nodes, edges)."""
        inv = _safe_inverse(self.node_degrees)
        return (sp.diags(inv) @ self.incidence).tocsr()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (
            self.node_kinds == other.node_kinds
            and self.edge_tags == other.edge_tags
            and len(self._members) == len(other._members)
            and all(np.array_equal(a, b) for a, b in zip(self._members, other._members))
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Hypergraph(nodes={self.n_nodes}, edges={self.n_edges}, nnz={int(self.node_degrees.sum())})"


def _safe_inverse(deg: np.ndarray) -> np.ndarray:
    out = np.zeros(len(deg), dtype=np.float64)
    nz = deg > 0
    out[nz] = 1.0 / deg[nz]
    return out


def build_hypergraph(
    node_kinds: Sequence[NodeKind | str],
    edges: Iterable[tuple],
    fill_isolated: bool = True,
) -> Hypergraph:
    """Validate and build a hypergraph.

    ``edges`` yields ``(tag, members)`` or ``(tag, members, name)``. Edges need
    at least two members unless tagged as a singleton fallback. With
    ``fill_isolated`` every node left without a hyperedge gets its own
    singleton edge so that degree normalisation never divides by zero.
    """
    kinds = [NodeKind(k) for k in node_kinds]
    n = len(kinds)
    tags, members, names = [], [], []
    for spec in edges:
        tag, mem = EdgeTag(spec[0]), list(spec[1])
        name = spec[2] if len(spec) > 2 else f"{tag.value}:{len(tags)}"
        if not mem:
            raise EmptyHyperedge(f"hyperedge {name!r} has no members")
        for x in mem:
            if not (isinstance(x, (int, np.integer)) and 0 <= x < n):
                raise UnknownNode(f"hyperedge {name!r} references undeclared node {x!r}")
        if len(set(mem)) != len(mem):
            raise DuplicateIncidence(f"hyperedge {name!r} lists a member twice")
        if len(mem) < 2 and not tag.is_singleton:
            raise UndersizedHyperedge(f"hyperedge {name!r} has a single member")
        tags.append(tag)
        members.append(np.asarray(mem, dtype=np.int64))
        names.append(name)

    if fill_isolated:
        covered = np.zeros(n, dtype=bool)
        for mem in members:
            covered[mem] = True
        for x in np.flatnonzero(~covered):
            tags.append(SELF_TAG[kinds[x]])
            members.append(np.array([x], dtype=np.int64))
            names.append(f"self:{x}")
    return Hypergraph(kinds, tags, members, names)


@dataclass(frozen=True)
class PerturbedView:
    """Read-only overlay of ``base`` with the single incidence (node, edge) zeroed."""

    base: Hypergraph
    node: int
    edge: int

    def edges_of(self, x: int) -> np.ndarray:
        es = self.base.edges_of(x)
        return es[es != self.edge] if x == self.node else es

    def members(self, e: int) -> np.ndarray:
        mem = self.base.members(e)
        return mem[mem != self.node] if e == self.edge else mem

    def node_degree(self, x: int) -> int:
        return len(self.edges_of(x))

    def edge_degree(self, e: int) -> int:
        return len(self.members(e))

    def is_incident(self, x: int, e: int) -> bool:
        if x == self.node and e == self.edge:
            return False
        return self.base.is_incident(x, e)

    @property
    def node_degrees(self) -> np.ndarray:
        deg = self.base.node_degrees.copy()
        deg[self.node] -= 1
        return deg

    @property
    def edge_degrees(self) -> np.ndarray:
        deg = self.base.edge_degrees.copy()
        deg[self.edge] -= 1
        return deg

    def to_dense(self) -> np.ndarray:
        h = self.base.to_dense()
        h[self.node, self.edge] = 0
        return h


def perturb_incidence(g: Hypergraph, x: int, e: int) -> PerturbedView:
    if not g.is_incident(x, e):
        raise NotIncident(f"node {x} is not incident to hyperedge {e}")
    return PerturbedView(g, int(x), int(e))


def update_with_interactions(g: Hypergraph, pairs: Iterable[tuple[int, int]]) -> Hypergraph:
    """Cross-connect interacting users and items.

    For each (user, item) pair the user joins every item-side hyperedge of the
    item and the item joins every user-side hyperedge of the user. Only the
    side-information edges of ``g`` are copied, so re-applying the same pairs
    to the result adds nothing.
    """
    extra: list[set[int]] = [set() for _ in range(g.n_edges)]
    for u, v in pairs:
        u, v = int(u), int(v)
        g._check_node(u)
        g._check_node(v)
        if g.node_kinds[u] != NodeKind.USER or g.node_kinds[v] != NodeKind.ITEM:
            raise UnknownNode(f"interaction ({u}, {v}) is not a user-item pair")
        for e in g.edges_of(v):
            if g.edge_tags[e].side == NodeKind.ITEM:
                extra[e].add(u)
        for e in g.edges_of(u):
            if g.edge_tags[e].side == NodeKind.USER:
                extra[e].add(v)
    if not any(extra):
        return g
    members = [
        np.union1d(g.members(e), np.fromiter(add, dtype=np.int64)) if add else g.members(e)
        for e, add in enumerate(extra)
    ]
    return Hypergraph(g.node_kinds, g.edge_tags, members, g.edge_names)
