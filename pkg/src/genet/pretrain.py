"""Pre-training on the side-information hypergraph.

The objective combines hyperlink prediction with a corrupted positive (node
perturbation plus incidence perturbation) and two InfoNCE-style
self-contrastive terms, one across the batch and one inside hyperedges.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .autograd import Tensor, l2_normalize, rowdot, spmm
from .encoder import ParamStore, encode, encode_perturbed_node, encode_tensor, perturbed_rows
from .errors import EmptyBatch, NoEligibleEdge
from .hypergraph import Hypergraph, perturb_incidence
from .optim import OptimizerState, adam_step

log = logging.getLogger(__name__)


class LossForm(str, Enum):
    LOG_SIGMOID = "log_sigmoid"
    RAW_SIGMOID = "raw_sigmoid"


@dataclass
class PretrainConfig:
    d: int = 64
    batch_size: int = 4096
    learning_rate: float = 0.0005
    epochs: int = 500
    lam: float = 0.1
    beta1_intra: float = 0.005
    beta2_inter: float = 0.01
    tau: float = 0.2
    k_intra: int = 8
    loss_form: LossForm = LossForm.LOG_SIGMOID
    np_enabled: bool = True
    imp_enabled: bool = True
    hscl_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        self.loss_form = LossForm(self.loss_form)
        for name in ("d", "batch_size", "learning_rate", "tau", "k_intra"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.lam < 0 or self.beta1_intra < 0 or self.beta2_inter < 0:
            raise ValueError("epochs, lam and betas must be non-negative")


# ---------------------------------------------------------------------------
# triple sampling

@dataclass(frozen=True)
class Triple:
    edge: int
    anchor: int
    positive: int
    negative: int


@dataclass
class TripleBatch:
    edge: np.ndarray
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __len__(self) -> int:
        return len(self.edge)

    def __iter__(self) -> Iterator[Triple]:
        for row in zip(self.edge, self.anchor, self.positive, self.negative):
            yield Triple(*map(int, row))


def eligible_edges(g: Hypergraph) -> np.ndarray:
    """Hyperedges with two or more members and at least one outsider."""
    deg = g.edge_degrees
    return np.flatnonzero((deg >= 2) & (deg < g.n_nodes))


def sample_triples(
    g: Hypergraph,
    count: int,
    rng: np.random.Generator | int,
    min_positive_degree: int = 1,
    max_retries: int = 8,
) -> TripleBatch:
    """Sample (edge, anchor, positive, negative) with uniform choices at each level.

    With ``min_positive_degree=2`` the anchor/positive pair is redrawn up to
    ``max_retries`` times when the positive would be left without a hyperedge
    by incidence perturbation; pairs that never qualify are kept as drawn.
    """
    rng = np.random.default_rng(rng)
    eligible = eligible_edges(g)
    if eligible.size == 0:
        raise NoEligibleEdge("no hyperedge has both two members and a non-member")
    edge = rng.choice(eligible, size=count)
    deg = g.edge_degrees[edge]
    offsets = np.concatenate([[0], np.cumsum(g.edge_degrees)])
    flat, _ = g.incidence_pairs()

    def draw_pair(sel):
        d = deg[sel]
        a = rng.integers(0, d)
        b = rng.integers(0, d - 1)
        b = b + (b >= a)
        base = offsets[edge[sel]]
        return flat[base + a], flat[base + b]

    anchor, positive = draw_pair(np.arange(count))
    if min_positive_degree > 1:
        for _ in range(max_retries):
            redo = np.flatnonzero(g.node_degrees[positive] < min_positive_degree)
            if redo.size == 0:
                break
            anchor[redo], positive[redo] = draw_pair(redo)

    incident_keys = flat * g.n_edges + np.repeat(np.arange(g.n_edges), g.edge_degrees)
    incident_keys.sort()

    def is_member(nodes, edges):
        keys = nodes * g.n_edges + edges
        pos = np.searchsorted(incident_keys, keys)
        pos = np.minimum(pos, len(incident_keys) - 1)
        return incident_keys[pos] == keys

    negative = rng.integers(0, g.n_nodes, size=count)
    clash = np.flatnonzero(is_member(negative, edge))
    while clash.size:
        negative[clash] = rng.integers(0, g.n_nodes, size=clash.size)
        clash = clash[is_member(negative[clash], edge[clash])]
    return TripleBatch(edge, anchor, positive, negative)


# ---------------------------------------------------------------------------
# corruption

def node_perturb(x: np.ndarray, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(x, lam * I)."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    return x + np.sqrt(lam) * rng.standard_normal(x.shape)


def corrupt_positive(
    g: Hypergraph,
    X: np.ndarray,
    E: np.ndarray,
    p: ParamStore,
    triple: Triple,
    lam: float,
    rng: np.random.Generator,
    np_enabled: bool = True,
    imp_enabled: bool = True,
) -> np.ndarray:
    """Corrupted positive embedding for one triple.

    Raises IsolatedAfterPerturbation when the positive's only hyperedge is
    the conditioning one; callers resample.
    """
    j = triple.positive
    out = node_perturb(X[j], lam, rng) if np_enabled else X[j].copy()
    if imp_enabled:
        view = perturb_incidence(g, j, triple.edge)
        out = out + encode_perturbed_node(view, E, p, j)
    return out


# ---------------------------------------------------------------------------
# losses (accept arrays or tensors, return tensors)

def ranking_loss(pos_scores, neg_scores, form: LossForm = LossForm.LOG_SIGMOID) -> Tensor:
    pos_scores = _t(pos_scores)
    if pos_scores.data.size == 0:
        raise EmptyBatch("empty batch")
    diff = pos_scores - _t(neg_scores)
    if LossForm(form) == LossForm.LOG_SIGMOID:
        return -diff.log_sigmoid().mean()
    return -diff.sigmoid().mean()


def hyperlink_loss(anchor, positive, negative, form: LossForm = LossForm.LOG_SIGMOID) -> Tensor:
    """Rows are aligned per triple: anchor x_i, corrupted positive, negative x_k."""
    anchor, positive, negative = _t(anchor), _t(positive), _t(negative)
    if anchor.shape[0] == 0:
        raise EmptyBatch("no triples")
    return ranking_loss(rowdot(anchor, positive), rowdot(anchor, negative), form)


def inter_contrastive_loss(X_b, X_aug, tau: float) -> Tensor:
    """Mean InfoNCE: each row against its augmented view, other batch rows as negatives."""
    X_b, X_aug = _t(X_b), _t(X_aug)
    n = X_b.shape[0]
    if n < 2:
        raise EmptyBatch("inter-hyperedge contrast needs at least two nodes")
    a = l2_normalize(X_b)
    pos = rowdot(a, l2_normalize(X_aug)) * (1.0 / tau)
    sims = (a @ a.T) * (1.0 / tau)
    off = 1.0 - np.eye(n)
    denom = pos.exp() + (sims.exp() * off).sum(axis=1)
    return (denom.log() - pos).mean()


def _peer_slots(groups: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each row, indices of the other rows in its group (padded) and a validity mask."""
    groups = np.asarray(groups)
    order = np.argsort(groups, kind="stable")
    _, starts, counts = np.unique(groups[order], return_index=True, return_counts=True)
    size = np.repeat(counts, counts)
    start = np.repeat(starts, counts)
    rank = np.arange(len(order)) - start
    width = max(int(counts.max()) - 1, 1)
    slot = np.arange(width)[None, :]
    member = slot + (slot >= rank[:, None])
    valid = slot < (size[:, None] - 1)
    pos = np.where(valid, start[:, None] + member, start[:, None] + rank[:, None])
    peers = np.empty((len(order), width), dtype=np.int64)
    mask = np.empty((len(order), width))
    peers[order] = order[pos]
    mask[order] = valid
    return peers, mask


def intra_contrastive_loss(X_h, X_aug, groups, tau: float) -> Tensor:
    """InfoNCE restricted to nodes sampled from the same hyperedge.

    ``groups`` labels each row with its hyperedge; the result is the mean over
    hyperedges of the mean over that hyperedge's sampled anchors.
    """
    X_h, X_aug = _t(X_h), _t(X_aug)
    groups = np.asarray(groups)
    n = X_h.shape[0]
    if n == 0:
        raise EmptyBatch("no hyperedges in batch")
    uniq, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    if counts.min() < 2:
        raise EmptyBatch("every sampled hyperedge needs at least two nodes")
    a = l2_normalize(X_h)
    pos = rowdot(a, l2_normalize(X_aug)) * (1.0 / tau)
    peers, mask = _peer_slots(groups)
    anchor = a[np.arange(n)[:, None]]
    neg = (anchor * a[peers]).sum(axis=2) * (1.0 / tau)
    denom = pos.exp() + (neg.exp() * mask).sum(axis=1)
    weights = 1.0 / (len(uniq) * counts[inverse])
    return ((denom.log() - pos) * weights).sum()


def pretrain_objective(loss_p, loss_intra, loss_inter, beta1: float, beta2: float, hscl_enabled: bool = True):
    if not hscl_enabled:
        return loss_p
    return loss_p + beta1 * loss_intra + beta2 * loss_inter


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# batches, gradients, training loop

@dataclass
class PretrainBatch:
    triples: TripleBatch
    noise: np.ndarray  # standard normal draws for node perturbation, one row per triple
    inter_nodes: np.ndarray
    inter_removed: np.ndarray
    intra_nodes: np.ndarray
    intra_removed: np.ndarray  # also the group label


def make_batch(g: Hypergraph, config: PretrainConfig, rng: np.random.Generator) -> PretrainBatch:
    min_deg = 2 if config.imp_enabled else 1
    triples = sample_triples(g, config.batch_size, rng, min_positive_degree=min_deg)
    noise = rng.standard_normal((len(triples), config.d))

    # contrastive batches reuse the anchors and hyperedges touched by the triples
    inter_nodes, first = np.unique(triples.anchor, return_index=True)
    inter_removed = triples.edge[first]

    nodes, removed = [], []
    for e in np.unique(triples.edge):
        mem = g.members(e)
        k = min(config.k_intra, len(mem))
        nodes.append(rng.choice(mem, size=k, replace=False))
        removed.append(np.full(k, e))
    return PretrainBatch(
        triples, noise, inter_nodes, inter_removed, np.concatenate(nodes), np.concatenate(removed)
    )


@dataclass
class LossComponents:
    loss_p: float
    loss_intra: float
    loss_inter: float
    total: float


def objective(
    g: Hypergraph, theta: Tensor, w: Tensor, batch: PretrainBatch, config: PretrainConfig
) -> tuple[Tensor, LossComponents]:
    X, E = encode_tensor(g, theta)
    tb = batch.triples
    positive = X[tb.positive]
    if config.np_enabled:
        positive = positive + np.sqrt(config.lam) * batch.noise
    edge_sums = None
    if config.imp_enabled or config.hscl_enabled:
        edge_sums = spmm(g.incidence, E)
    if config.imp_enabled:
        aug, _ = perturbed_rows(g, E, w, tb.positive, tb.edge, edge_sums)
        positive = positive + aug
    loss_p = hyperlink_loss(X[tb.anchor], positive, X[tb.negative], config.loss_form)

    if config.hscl_enabled and len(batch.inter_nodes) >= 2:
        aug, _ = perturbed_rows(g, E, w, batch.inter_nodes, batch.inter_removed, edge_sums)
        loss_inter = inter_contrastive_loss(X[batch.inter_nodes], aug, config.tau)
    else:
        loss_inter = Tensor(0.0)
    if config.hscl_enabled:
        aug, _ = perturbed_rows(g, E, w, batch.intra_nodes, batch.intra_removed, edge_sums)
        loss_intra = intra_contrastive_loss(X[batch.intra_nodes], aug, batch.intra_removed, config.tau)
    else:
        loss_intra = Tensor(0.0)

    total = pretrain_objective(
        loss_p, loss_intra, loss_inter, config.beta1_intra, config.beta2_inter, config.hscl_enabled
    )
    parts = LossComponents(loss_p.item(), loss_intra.item(), loss_inter.item(), total.item())
    return total, parts


def compute_gradients(
    g: Hypergraph, params: ParamStore, batch: PretrainBatch, config: PretrainConfig
) -> tuple[LossComponents, dict[str, np.ndarray | None]]:
    """Exact gradients of the combined objective; the perturbation noise is held fixed."""
    theta = Tensor(params.theta, requires_grad=True)
    w = Tensor(params.w, requires_grad=True)
    total, parts = objective(g, theta, w, batch, config)
    total.backward()
    return parts, {"theta": theta.grad, "w": w.grad}


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def evaluate_objective(g: Hypergraph, params: ParamStore, config: PretrainConfig, seed: int) -> LossComponents:
    """Objective on a batch fixed by ``seed``; useful for before/after comparisons."""
    batch = make_batch(g, config, np.random.default_rng(seed))
    _, parts = objective(g, Tensor(params.theta), Tensor(params.w), batch, config)
    return parts


@dataclass
class PretrainResult:
    params: ParamStore
    X: np.ndarray
    E: np.ndarray
    history: list[LossComponents] = field(default_factory=list)


def run_pretraining(g: Hypergraph, config: PretrainConfig, params: ParamStore | None = None) -> PretrainResult:
    if params is None:
        params = ParamStore.initialize(g.n_nodes, config.d, config.seed)
    else:
        params = params.copy()
    state = OptimizerState()
    history = []
    for epoch in range(config.epochs):
        batch = make_batch(g, config, epoch_rng(config.seed, epoch))
        parts, grads = compute_gradients(g, params, batch, config)
        adam_step(state, {"theta": params.theta, "w": params.w}, grads, config.learning_rate)
        history.append(parts)
        if epoch % 50 == 0:
            log.info("pretrain epoch %d total=%.5f", epoch, parts.total)
    X, E = encode(g, params)
    return PretrainResult(params, X, E, history)


def history_tsv(history: list[LossComponents]) -> str:
    lines = ["epoch\tloss_p\tloss_intra\tloss_inter\ttotal"]
    for i, h in enumerate(history):
        lines.append(f"{i}\t{h.loss_p:.8g}\t{h.loss_intra:.8g}\t{h.loss_inter:.8g}\t{h.total:.8g}")
    return "\n".join(lines) + "\n"
