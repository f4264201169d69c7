"""Leave-one-out splits, candidate ranking, Recall@K / NDCG@K, cold-start cohorts."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, EmptyLog
from .interactions import Interaction, InteractionLog


@dataclass(frozen=True)
class EvalMode:
    """Full-catalog ranking when ``n_negatives`` is None, else target plus n sampled items."""

    n_negatives: int | None = None

    @classmethod
    def parse(cls, text: str) -> "EvalMode":
        text = text.strip().lower()
        if text in ("full", "fullranking"):
            return cls()
        if text.startswith("sampled"):
            _, _, n = text.partition(":")
            return cls(int(n) if n else 99)
        raise ValueError(f"unknown evaluation mode {text!r}")

    def __str__(self) -> str:
        return "full" if self.n_negatives is None else f"sampled:{self.n_negatives}"


FULL_RANKING = EvalMode()


@dataclass
class SplitSpec:
    train: list[Interaction]
    valid: list[Interaction]
    test: list[Interaction]
    # items each test user saw before its target, oldest first (GRU input at evaluation)
    histories: list[list[int]]
    mode: EvalMode = FULL_RANKING
    cold_users: frozenset[int] = frozenset()
    cold_items: frozenset[int] = frozenset()

    @property
    def train_log(self) -> InteractionLog:
        return InteractionLog(self.train)

    def train_items(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = defaultdict(set)
        for r in self.train:
            out[r.user].add(r.item)
        return out


def _history_before(log: InteractionLog, target: Interaction) -> list[int]:
    seq = log.by_user[target.user]
    pos = next(i for i, r in enumerate(seq) if r is target)
    return [r.item for r in seq[:pos]]


def leave_one_out_split(log: InteractionLog, mode: EvalMode = FULL_RANKING) -> SplitSpec:
    """Per user: last interaction to test, second-to-last to validation, rest to train.

    Users with fewer than three interactions are not evaluated; all their
    records stay in training.
    """
    if len(log) == 0:
        raise EmptyLog("no interactions")
    train, valid, test = [], [], []
    for u in sorted(log.by_user):
        seq = log.by_user[u]
        if len(seq) < 3:
            train.extend(seq)
            continue
        train.extend(seq[:-2])
        valid.append(seq[-2])
        test.append(seq[-1])
    histories = [_history_before(log, t) for t in test]
    return SplitSpec(train, valid, test, histories, mode)


def cold_cohort(counts: Counter, fraction: float = 0.01) -> list[int]:
    """Lowest-count ids, ceil(fraction * n) of them; ties broken by id."""
    ids = sorted(counts, key=lambda x: (counts[x], x))
    return ids[: math.ceil(fraction * len(ids))]


def cold_start_splits(
    log: InteractionLog, fraction: float = 0.01, mode: EvalMode = FULL_RANKING
) -> tuple[SplitSpec, SplitSpec]:
    """(user-cold, item-cold) splits.

    Cold users (or items) lose every training and validation record; the test
    set holds one target per cold user (their last interaction) or per cold
    item (its last interaction).
    """
    if len(log) == 0:
        raise EmptyLog("no interactions")
    base = leave_one_out_split(log, mode)

    users = cold_cohort(Counter(r.user for r in log), fraction)
    cu = frozenset(users)
    user_test = [log.by_user[u][-1] for u in users]
    user_split = SplitSpec(
        [r for r in base.train if r.user not in cu],
        [r for r in base.valid if r.user not in cu],
        user_test,
        [_history_before(log, t) for t in user_test],
        mode,
        cold_users=cu,
    )

    items = cold_cohort(Counter(r.item for r in log), fraction)
    ci = frozenset(items)
    last: dict[int, Interaction] = {}
    for r in sorted(log.records, key=lambda r: r.timestamp):
        if r.item in ci:
            last[r.item] = r
    item_test = [last[i] for i in items]
    item_split = SplitSpec(
        [r for r in base.train if r.item not in ci],
        [r for r in base.valid if r.item not in ci],
        item_test,
        [_history_before(log, t) for t in item_test],
        mode,
        cold_items=ci,
    )
    return user_split, item_split


# ---------------------------------------------------------------------------
# ranking

def rank_items(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Candidates sorted by descending score, ties by ascending item index."""
    candidates = np.asarray(candidates, dtype=np.int64)
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def target_rank(scores: np.ndarray, target: int, candidates: np.ndarray) -> int:
    """1-based position of ``target`` in :func:`rank_items` order without sorting."""
    s = scores[candidates]
    st = scores[target]
    ahead = (s > st) | ((s == st) & (candidates < target))
    return int(ahead.sum()) + 1


def candidate_set(
    target: int,
    item_nodes: np.ndarray,
    seen: set[int],
    mode: EvalMode,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Items eligible for ranking: unseen catalog (plus the target), or target + n sampled unseen."""
    excluded = np.array(sorted(seen - {target}), dtype=np.int64)
    pool = np.setdiff1d(item_nodes, excluded, assume_unique=True) if excluded.size else np.asarray(item_nodes)
    if mode.n_negatives is None:
        return pool
    negatives = pool[pool != target]
    if mode.n_negatives < len(negatives):
        rng = rng or np.random.default_rng(0)
        negatives = np.sort(rng.choice(negatives, size=mode.n_negatives, replace=False))
    return np.concatenate([[target], negatives])


# ---------------------------------------------------------------------------
# metrics

@dataclass
class MetricReport:
    recall: dict[int, float]
    ndcg: dict[int, float]
    n_users: int
    task: str = "topn"
    tags: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        name, _, k = key.partition("@")
        return {"recall": self.recall, "ndcg": self.ndcg}[name.lower()][int(k)]

    def rows(self) -> list[tuple[str, float]]:
        out = []
        for k in sorted(self.recall):
            out.append((f"recall@{k}", self.recall[k]))
        for k in sorted(self.ndcg):
            out.append((f"ndcg@{k}", self.ndcg[k]))
        return out

    def to_tsv(self) -> str:
        lines = ["task\tmetric\tvalue\tusers"]
        lines += [f"{self.task}\t{name}\t{value:.6f}\t{self.n_users}" for name, value in self.rows()]
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        head = f"{self.task}  ({self.n_users} test cases)"
        tag_txt = "  ".join(f"{k}={v}" for k, v in sorted(self.tags.items()))
        body = "\n".join(f"  {name:<10} {value:.4f}" for name, value in self.rows())
        return "\n".join(x for x in (head, tag_txt and "  " + tag_txt, body) if x)


def compute_metrics(ranks: Sequence[int], ks: Sequence[int] = (10, 20), task: str = "topn") -> MetricReport:
    """Single-target metrics: hit rate within K and 1/log2(rank + 1) discounted gain."""
    r = np.asarray(ranks, dtype=np.float64)
    if r.size == 0:
        raise EmptyInput("no ranks to score")
    if (r < 1).any():
        raise ValueError("ranks are 1-based")
    recall, ndcg = {}, {}
    for k in ks:
        hit = r <= k
        recall[int(k)] = float(hit.mean())
        ndcg[int(k)] = float(np.where(hit, 1.0 / np.log2(r + 1.0), 0.0).mean())
    return MetricReport(recall, ndcg, int(r.size), task)


def evaluate(
    split: SplitSpec,
    score_fn: Callable[[np.ndarray], np.ndarray],
    item_nodes: np.ndarray,
    ks: Sequence[int] = (10, 20),
    task: str = "topn",
    seed: int = 0,
) -> tuple[MetricReport, np.ndarray]:
    """Rank each test target among its candidates.

    ``score_fn`` maps an array of test-case indices to a (cases, n_nodes) score
    matrix. Returns the report and the per-case ranks.
    """
    if not split.test:
        raise EmptyInput("split has no test cases")
    seen = split.train_items()
    ranks = np.zeros(len(split.test), dtype=np.int64)
    chunk = 512
    for lo in range(0, len(split.test), chunk):
        idx = np.arange(lo, min(lo + chunk, len(split.test)))
        scores = score_fn(idx)
        for row, i in enumerate(idx):
            rec = split.test[i]
            rng = np.random.default_rng([seed, int(i)])
            cand = candidate_set(rec.item, item_nodes, seen.get(rec.user, set()), split.mode, rng)
            ranks[i] = target_rank(scores[row], rec.item, cand)
    report = compute_metrics(ranks, ks, task)
    report.tags["mode"] = str(split.mode)
    return report, ranks

