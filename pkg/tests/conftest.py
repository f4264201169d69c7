"""Shared fixtures and hypothesis strategies."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from genet.hypergraph import EdgeTag, Hypergraph, NodeKind, build_hypergraph


def random_hypergraph(rng: np.random.Generator, max_nodes: int = 50, max_edges: int = 20) -> Hypergraph:
    """Random user/item hypergraph; uncovered nodes receive singleton edges."""
    n = int(rng.integers(2, max_nodes + 1))
    kinds = [NodeKind.USER if rng.random() < 0.5 else NodeKind.ITEM for _ in range(n)]
    edges = []
    for _ in range(int(rng.integers(1, max_edges + 1))):
        size = int(rng.integers(2, min(n, 8) + 1))
        tag = EdgeTag.SOCIAL_CIRCLE if rng.random() < 0.5 else EdgeTag.CATEGORY
        edges.append((tag, rng.choice(n, size=size, replace=False).tolist()))
    return build_hypergraph(kinds, edges)


@st.composite
def hypergraphs(draw, max_nodes: int = 12, max_edges: int = 8):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_hypergraph(np.random.default_rng(seed), max_nodes, max_edges)


def dense_propagation(h: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference (X, E) from the dense incidence matrix, zero-degree rows left at zero."""
    h = h.astype(np.float64)
    de, dv = h.sum(axis=0), h.sum(axis=1)
    de_inv = np.divide(1.0, de, out=np.zeros_like(de), where=de > 0)
    dv_inv = np.divide(1.0, dv, out=np.zeros_like(dv), where=dv > 0)
    E = np.diag(de_inv) @ h.T @ theta
    X = np.diag(dv_inv) @ h @ E
    return X, E


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def two_edge_graph() -> Hypergraph:
    """u0,u1,u2 users and i3,i4 items; e0={u0,u1}, e1={u1,u2}, e2={i3,i4}."""
    kinds = ["user", "user", "user", "item", "item"]
    return build_hypergraph(
        kinds,
        [
            (EdgeTag.SOCIAL_CIRCLE, [0, 1]),
            (EdgeTag.SOCIAL_CIRCLE, [1, 2]),
            (EdgeTag.BRAND, [3, 4]),
        ],
    )


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative difference, safe when both gradients vanish."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(num / den)


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Gradient of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
