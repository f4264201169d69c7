"""Light hypergraph encoder: linear node -> hyperedge -> node propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, spmm
from .errors import DimensionMismatch, IsolatedAfterPerturbation
from .hypergraph import Hypergraph, PerturbedView


@dataclass
class ParamStore:
    """Trainable node embedding table ``theta`` (nodes x d) and projection ``w`` (d x d).

    ``theta`` plays the role of the one-hot input times the first-layer weight,
    so encoding starts from a plain row lookup.
    """

    theta: np.ndarray
    w: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.theta.ndim != 2 or self.theta.shape[1] == 0:
            raise DimensionMismatch(f"theta must be (nodes, d>0), got {self.theta.shape}")
        if self.w.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"w must be {self.dim}x{self.dim}, got {self.w.shape}")

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def initialize(cls, n_nodes: int, dim: int, seed: int = 0) -> "ParamStore":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        theta = rng.uniform(-bound, bound, size=(n_nodes, dim))
        return cls(theta, np.eye(dim), seed)

    def copy(self) -> "ParamStore":
        return ParamStore(self.theta.copy(), self.w.copy(), self.seed)


def _check_rows(g: Hypergraph, theta: np.ndarray) -> None:
    if theta.shape[0] != g.n_nodes:
        raise DimensionMismatch(f"{theta.shape[0]} embedding rows for {g.n_nodes} nodes")


def encode_edges(g: Hypergraph, p: ParamStore) -> np.ndarray:
    """Each hyperedge embedding is the mean of its members' theta rows."""
    _check_rows(g, p.theta)
    return g.edge_mean_operator @ p.theta


def encode_nodes(g: Hypergraph, E: np.ndarray) -> np.ndarray:
    """Each node embedding is the mean of its incident hyperedge embeddings."""
    if E.shape[0] != g.n_edges:
        raise DimensionMismatch(f"{E.shape[0]} edge rows for {g.n_edges} hyperedges")
    return g.node_mean_operator @ E


def encode(g: Hypergraph, p: ParamStore) -> tuple[np.ndarray, np.ndarray]:
    """Return (X, E)."""
    E = encode_edges(g, p)
    return encode_nodes(g, E), E


def encode_perturbed_node(view: PerturbedView, E: np.ndarray, p: ParamStore, x: int) -> np.ndarray:
    """Row ``x`` of Dv^-1 H E W evaluated on the perturbed incidence."""
    if E.shape != (view.base.n_edges, p.dim):
        raise DimensionMismatch(f"edge embeddings {E.shape} vs ({view.base.n_edges}, {p.dim})")
    edges = view.edges_of(x)
    if len(edges) == 0:
        raise IsolatedAfterPerturbation(f"node {x} has no hyperedge left")
    return E[edges].mean(axis=0) @ p.w


def updated_node_embeddings(
    g_updated: Hypergraph, X: np.ndarray, E: np.ndarray, p: ParamStore
) -> np.ndarray:
    """Residual re-propagation over the feedback-updated hypergraph: X + Dv~^-1 H~ E W."""
    if X.shape != (g_updated.n_nodes, p.dim):
        raise DimensionMismatch(f"X has shape {X.shape}, expected ({g_updated.n_nodes}, {p.dim})")
    if E.shape != (g_updated.n_edges, p.dim):
        raise DimensionMismatch(f"E has shape {E.shape}, expected ({g_updated.n_edges}, {p.dim})")
    return X + g_updated.node_mean_operator @ (E @ p.w)


# ---------------------------------------------------------------------------
# batched, differentiable versions used by the training loop

def encode_tensor(g: Hypergraph, theta: Tensor) -> tuple[Tensor, Tensor]:
    E = spmm(g.edge_mean_operator, theta)
    return spmm(g.node_mean_operator, E), E


def perturbed_rows(
    g: Hypergraph,
    E: Tensor,
    w: Tensor,
    nodes: np.ndarray,
    removed: np.ndarray,
    edge_sums: Tensor | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Perturbed propagation for many (node, removed edge) pairs at once.

    Uses sum_{e ni x, e != h} E[e] = (H E)[x] - E[h]. Nodes whose only edge is
    removed get a zero row; the returned mask marks them.
    """
    if edge_sums is None:
        edge_sums = spmm(g.incidence, E)
    deg = g.node_degrees[nodes]
    isolated = deg <= 1
    scale = np.where(isolated, 0.0, 1.0 / np.maximum(deg - 1, 1))[:, None]
    rows = (edge_sums[nodes] - E[removed]) * scale
    return rows @ w, isolated
