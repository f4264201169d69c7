"""Fine-tuning pre-trained embeddings on feedback.

Top-N: LightGCN over the user-item bipartite graph, initialised from the
feedback-updated hypergraph encoding, trained with a pairwise ranking loss.
Sequential: the same, with a GRU over the user's most recent items added to
the long-term user vector.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .autograd import Tensor, rowdot, spmm
from .encoder import ParamStore, updated_node_embeddings
from .errors import DimensionMismatch, EmptySequence, UnknownNode
from .hypergraph import Hypergraph, NodeKind, update_with_interactions
from .interactions import InteractionLog
from .optim import OptimizerState, adam_step
from .pretrain import LossForm, ranking_loss

log = logging.getLogger(__name__)


class Task(str, Enum):
    TOPN = "topn"
    SEQ = "seq"


@dataclass
class FinetuneConfig:
    epochs: int = 10
    learning_rate: float = 0.0005
    warm_epochs: int = 3
    warm_factor: float = 10.0
    layers: int = 2
    seq_len: int = 20
    batch_size: int = 4096
    loss_form: LossForm = LossForm.LOG_SIGMOID
    seed: int = 0

    def __post_init__(self):
        self.loss_form = LossForm(self.loss_form)
        if self.learning_rate <= 0 or self.seq_len <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, seq_len and batch_size must be positive")
        if min(self.epochs, self.warm_epochs, self.layers) < 0:
            raise ValueError("epochs, warm_epochs and layers must be non-negative")

    def lr_at(self, epoch: int) -> float:
        if epoch < self.warm_epochs:
            return self.learning_rate * self.warm_factor
        return self.learning_rate


# ---------------------------------------------------------------------------
# LightGCN

@dataclass
class BipartiteGraph:
    n_nodes: int
    user_items: dict[int, set[int]]
    item_users: dict[int, set[int]]
    degrees: np.ndarray
    norm_adj: sp.csr_matrix  # D^-1/2 A D^-1/2 over all nodes


def build_bipartite(log_: InteractionLog, node_kinds: Sequence[NodeKind]) -> BipartiteGraph:
    n = len(node_kinds)
    user_items: dict[int, set[int]] = {}
    item_users: dict[int, set[int]] = {}
    for r in log_:
        for x, kind in ((r.user, NodeKind.USER), (r.item, NodeKind.ITEM)):
            if not 0 <= x < n or node_kinds[x] != kind:
                raise UnknownNode(f"{kind.value} node {x} not found")
        user_items.setdefault(r.user, set()).add(r.item)
        item_users.setdefault(r.item, set()).add(r.user)
    degrees = np.zeros(n, dtype=np.int64)
    rows, cols = [], []
    for u, items in user_items.items():
        degrees[u] = len(items)
        for v in items:
            rows += [u, v]
            cols += [v, u]
    for v, users in item_users.items():
        degrees[v] = len(users)
    rows_a, cols_a = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)
    vals = 1.0 / np.sqrt(degrees[rows_a].astype(float) * degrees[cols_a]) if rows else np.zeros(0)
    adj = sp.csr_matrix((vals, (rows_a, cols_a)), shape=(n, n))
    return BipartiteGraph(n, user_items, item_users, degrees, adj)


def _layer_scale(A: BipartiteGraph, layers: int) -> np.ndarray:
    # isolated nodes keep their layer-0 vector instead of being averaged with zeros
    return np.where(A.degrees > 0, 1.0 / (layers + 1), 1.0)[:, None]


def lightgcn_propagate(A: BipartiteGraph, X0: np.ndarray, layers: int) -> np.ndarray:
    """Mean of layers 0..K of symmetric-normalised propagation, all nodes.

    User and item rows are both in the returned matrix, at their node indices.
    """
    if X0.shape[0] != A.n_nodes:
        raise DimensionMismatch(f"{X0.shape[0]} rows for {A.n_nodes} nodes")
    total = X0.copy()
    cur = X0
    for _ in range(layers):
        cur = A.norm_adj @ cur
        total = total + cur
    return total * _layer_scale(A, layers)


def lightgcn_tensor(A: BipartiteGraph, X0: Tensor, layers: int) -> Tensor:
    total, cur = X0, X0
    for _ in range(layers):
        cur = spmm(A.norm_adj, cur)
        total = total + cur
    return total * _layer_scale(A, layers)


def topn_loss(users, pos_items, neg_items, form: LossForm = LossForm.LOG_SIGMOID) -> Tensor:
    users, pos_items, neg_items = (x if isinstance(x, Tensor) else Tensor(x) for x in (users, pos_items, neg_items))
    return ranking_loss(rowdot(users, pos_items), rowdot(users, neg_items), form)


# the sequential loss has the same form with the short-term-augmented user vector
seq_loss = topn_loss


# ---------------------------------------------------------------------------
# GRU

GRU_NAMES = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")


@dataclass
class GruParams:
    """Gate weights act on column vectors: z = sigmoid(w_z x + u_z h + b_z)."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def dim(self) -> int:
        return self.b_z.shape[0]

    @classmethod
    def initialize(cls, d: int, seed: int = 0) -> "GruParams":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(d)
        mats = {n: rng.uniform(-bound, bound, size=(d, d)) for n in GRU_NAMES[:6]}
        vecs = {n: rng.uniform(-bound, bound, size=d) for n in GRU_NAMES[6:]}
        return cls(**mats, **vecs)

    @classmethod
    def zeros(cls, d: int) -> "GruParams":
        return cls(**{n: np.zeros((d, d)) for n in GRU_NAMES[:6]}, **{n: np.zeros(d) for n in GRU_NAMES[6:]})

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in GRU_NAMES}

    def stacked(self) -> np.ndarray:
        """Rows: six d x d matrices then three bias rows."""
        return np.vstack([getattr(self, n) for n in GRU_NAMES[:6]] + [getattr(self, n)[None, :] for n in GRU_NAMES[6:]])

    @classmethod
    def from_stacked(cls, a: np.ndarray) -> "GruParams":
        d = a.shape[1]
        if a.shape[0] != 6 * d + 3:
            raise DimensionMismatch(f"stacked GRU block has {a.shape[0]} rows, expected {6 * d + 3}")
        mats = {n: a[i * d : (i + 1) * d].copy() for i, n in enumerate(GRU_NAMES[:6])}
        vecs = {n: a[6 * d + i].copy() for i, n in enumerate(GRU_NAMES[6:])}
        return cls(**mats, **vecs)


def gru_step(p: dict, x: Tensor, h: Tensor) -> Tensor:
    z = (x @ p["w_z"].T + h @ p["u_z"].T + p["b_z"]).sigmoid()
    r = (x @ p["w_r"].T + h @ p["u_r"].T + p["b_r"]).sigmoid()
    cand = (x @ p["w_h"].T + (r * h) @ p["u_h"].T + p["b_h"]).tanh()
    return (1.0 - z) * h + z * cand


def gru_batch(p: dict, item_vectors: Tensor, seq_items: np.ndarray, seq_mask: np.ndarray) -> Tensor:
    """Final hidden state per row of a left-padded item-index matrix.

    Padded positions (mask 0) carry the previous state through unchanged, so a
    row equals running the GRU over its real items only.
    """
    n, length = seq_items.shape
    d = item_vectors.shape[1]
    h = Tensor(np.zeros((n, d)))
    for t in range(length):
        m = seq_mask[:, t : t + 1].astype(np.float64)
        if not m.any():
            continue
        h_new = gru_step(p, item_vectors[seq_items[:, t]], h)
        h = h_new * m + h * (1.0 - m)
    return h


def gru_forward(params: GruParams, sequence: np.ndarray, seq_len: int | None = None) -> np.ndarray:
    """Hidden state after the last of the (at most ``seq_len`` most recent) inputs."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2 or len(seq) == 0:
        raise EmptySequence("GRU needs at least one input vector")
    if seq.shape[1] != params.dim:
        raise DimensionMismatch(f"input dim {seq.shape[1]} vs hidden size {params.dim}")
    if seq_len is not None:
        seq = seq[-seq_len:]
    p = {k: Tensor(v) for k, v in params.as_dict().items()}
    h = Tensor(np.zeros((1, params.dim)))
    for x in seq:
        h = gru_step(p, Tensor(x[None, :]), h)
    return h.data[0]


def seq_user_representation(u_bar: np.ndarray, h: np.ndarray) -> np.ndarray:
    u_bar, h = np.asarray(u_bar), np.asarray(h)
    if u_bar.shape != h.shape:
        raise DimensionMismatch(f"{u_bar.shape} vs {h.shape}")
    return u_bar + h


def pad_sequences(histories: Sequence[Sequence[int]], seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad the last ``seq_len`` entries of each history; returns (items, mask)."""
    n = len(histories)
    items = np.zeros((n, seq_len), dtype=np.int64)
    mask = np.zeros((n, seq_len), dtype=bool)
    for i, hist in enumerate(histories):
        tail = list(hist)[-seq_len:]
        if tail:
            items[i, seq_len - len(tail) :] = tail
            mask[i, seq_len - len(tail) :] = True
    return items, mask


# ---------------------------------------------------------------------------
# training

@dataclass
class Pretrained:
    """Frozen pre-training outputs consumed by fine-tuning."""

    X: np.ndarray
    E: np.ndarray
    params: ParamStore


@dataclass
class FinetuneResult:
    task: Task
    table: np.ndarray  # trained layer-0 embeddings
    output: np.ndarray  # LightGCN output rows for every node
    gru: GruParams | None
    bipartite: BipartiteGraph
    history: list[float] = field(default_factory=list)


def initial_table(
    g: Hypergraph, train: InteractionLog, pretrained: Pretrained | None, dim: int, seed: int
) -> np.ndarray:
    """Feedback-updated residual encoding, or a uniform random table when no pre-training is given."""
    if pretrained is None:
        return ParamStore.initialize(g.n_nodes, dim, seed).theta
    g_updated = update_with_interactions(g, train.pairs())
    return updated_node_embeddings(g_updated, pretrained.X, pretrained.E, pretrained.params)


def _sample_negatives(rng, users, user_items, item_nodes) -> np.ndarray:
    neg = item_nodes[rng.integers(0, len(item_nodes), size=len(users))]
    for i, u in enumerate(users):
        seen = user_items[u]
        if len(seen) >= len(item_nodes):
            continue
        while neg[i] in seen:
            neg[i] = item_nodes[rng.integers(0, len(item_nodes))]
    return neg


def training_samples(train: InteractionLog, task: Task, seq_len: int):
    """(users, positives, histories) for one pass over the training feedback."""
    users, pos, hist = [], [], []
    if task == Task.TOPN:
        seen = set()
        for r in train:
            if (r.user, r.item) not in seen:
                seen.add((r.user, r.item))
                users.append(r.user)
                pos.append(r.item)
    else:
        for u in sorted(train.by_user):
            items = [r.item for r in train.by_user[u]]
            for t in range(1, len(items)):
                users.append(u)
                pos.append(items[t])
                hist.append(items[max(0, t - seq_len) : t])
    return np.array(users, dtype=np.int64), np.array(pos, dtype=np.int64), hist


def run_finetune(
    task: Task | str,
    g: Hypergraph,
    pretrained: Pretrained | None,
    train: InteractionLog,
    config: FinetuneConfig,
    dim: int | None = None,
) -> FinetuneResult:
    """Train the layer-0 table (and the GRU for the sequential task).

    The pre-trained hyperedge embeddings and projection stay frozen; they only
    enter through the initial table.
    """
    task = Task(task)
    if dim is None:
        if pretrained is None:
            raise ValueError("dim is required without pre-trained embeddings")
        dim = pretrained.params.dim
    table = initial_table(g, train, pretrained, dim, config.seed).copy()
    A = build_bipartite(train, g.node_kinds)
    item_nodes = g.nodes_of_kind(NodeKind.ITEM)
    gru = GruParams.initialize(dim, config.seed + 1) if task == Task.SEQ else None

    users, pos, hist = training_samples(train, task, config.seq_len)
    state = OptimizerState()
    history = []
    for epoch in range(config.epochs):
        if len(users) == 0:
            break
        rng = np.random.default_rng([config.seed, epoch])
        neg = _sample_negatives(rng, users, A.user_items, item_nodes)
        order = rng.permutation(len(users))
        lr = config.lr_at(epoch)
        losses, weights = [], []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            t_table = Tensor(table, requires_grad=True)
            out = lightgcn_tensor(A, t_table, config.layers)
            u_vec = out[users[idx]]
            params = {"table": table}
            if gru is not None:
                g_params = {k: Tensor(v, requires_grad=True) for k, v in gru.as_dict().items()}
                seq_items, seq_mask = pad_sequences([hist[i] for i in idx], config.seq_len)
                u_vec = u_vec + gru_batch(g_params, out, seq_items, seq_mask)
            loss = topn_loss(u_vec, out[pos[idx]], out[neg[idx]], config.loss_form)
            loss.backward()
            grads = {"table": t_table.grad}
            if gru is not None:
                params.update(gru.as_dict())
                grads.update({k: t.grad for k, t in g_params.items()})
            adam_step(state, params, grads, lr)
            losses.append(loss.item())
            weights.append(len(idx))
        history.append(float(np.average(losses, weights=weights)))
        log.info("finetune %s epoch %d loss=%.5f", task.value, epoch, history[-1])
    output = lightgcn_propagate(A, table, config.layers)
    return FinetuneResult(task, table, output, gru, A, history)


def user_vectors(
    result_output: np.ndarray,
    users: Sequence[int],
    gru: GruParams | None = None,
    histories: Sequence[Sequence[int]] | None = None,
    seq_len: int = 20,
) -> np.ndarray:
    """Scoring vectors: LightGCN user rows, plus the GRU state over recent items when given."""
    vec = result_output[np.asarray(users, dtype=np.int64)]
    if gru is None:
        return vec
    items, mask = pad_sequences(histories, seq_len)
    p = {k: Tensor(v) for k, v in gru.as_dict().items()}
    h = gru_batch(p, Tensor(result_output), items, mask)
    return vec + h.data
