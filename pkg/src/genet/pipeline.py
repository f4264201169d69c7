"""Glue between side-information tables, pre-training, fine-tuning and evaluation."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .evaluation import FULL_RANKING, EvalMode, MetricReport, SplitSpec, evaluate, leave_one_out_split
from .finetune import FinetuneConfig, FinetuneResult, GruParams, Pretrained, Task, run_finetune, user_vectors
from .hypergraph import Hypergraph, NodeKind
from .interactions import Interaction, InteractionLog
from .pretrain import PretrainConfig, run_pretraining
from .sideinfo import (
    IdMap,
    ItemMeta,
    PoiRecord,
    ReviewRecord,
    SocialEdge,
    assemble,
    build_feature_hyperedges,
    build_region_hyperedges,
    build_social_circles,
    mine_brand_fans,
    register_nodes,
)


@dataclass
class BuildOptions:
    k_regions: int | None = None
    rating_threshold: float = 4.0
    min_reviews: int = 2
    seed: int = 0


def build_graph(
    social: Sequence[SocialEdge] = (),
    poi: Sequence[PoiRecord] = (),
    reviews: Sequence[ReviewRecord] = (),
    meta: Sequence[ItemMeta] = (),
    interaction_keys: Sequence[tuple[str, str, int]] = (),
    options: BuildOptions | None = None,
) -> tuple[Hypergraph, IdMap]:
    """Register every node, run each recipe that has input, and assemble."""
    options = options or BuildOptions()
    idmap = register_nodes(IdMap(), social, poi, reviews, meta, [(u, i) for u, i, _ in interaction_keys])
    pieces = []
    if social:
        pieces.append(build_social_circles(social, idmap))
    if poi:
        pieces.append(build_region_hyperedges(poi, idmap, options.k_regions, options.seed))
    if reviews:
        pieces.append(mine_brand_fans(reviews, idmap, options.rating_threshold, options.min_reviews))
    if meta:
        pieces.append(build_feature_hyperedges(meta, idmap))
    return assemble(idmap, pieces), idmap


def to_log(interaction_keys: Sequence[tuple[str, str, int]], idmap: IdMap) -> InteractionLog:
    return InteractionLog(Interaction(idmap.user(u), idmap.item(i), t) for u, i, t in interaction_keys)


def score_function(out: np.ndarray, split: SplitSpec, gru: GruParams | None = None, seq_len: int = 20):
    """score_fn for :func:`evaluate`: inner products against every node row of ``out``."""

    def score(idx: np.ndarray) -> np.ndarray:
        users = [split.test[i].user for i in idx]
        hist = [split.histories[i] for i in idx] if gru is not None else None
        vec = user_vectors(out, users, gru, hist, seq_len)
        return vec @ out.T

    return score


def evaluate_result(
    g: Hypergraph, result: FinetuneResult, split: SplitSpec, ks=(10, 20), seq_len: int = 20, seed: int = 0
) -> MetricReport:
    report, _ = evaluate(
        split,
        score_function(result.output, split, result.gru, seq_len),
        g.nodes_of_kind(NodeKind.ITEM),
        ks,
        result.task.value,
        seed,
    )
    return report


def pretrain_finetune_eval(
    g: Hypergraph,
    log: InteractionLog,
    pretrain_config: PretrainConfig | None,
    finetune_config: FinetuneConfig,
    task: Task | str = Task.TOPN,
    mode: EvalMode = FULL_RANKING,
    split: SplitSpec | None = None,
    dim: int = 64,
) -> tuple[MetricReport, FinetuneResult]:
    """Full run; ``pretrain_config=None`` fine-tunes from a random table instead."""
    split = split or leave_one_out_split(log, mode)
    pretrained = None
    if pretrain_config is not None:
        pre = run_pretraining(g, pretrain_config)
        pretrained = Pretrained(pre.X, pre.E, pre.params)
        dim = pretrain_config.d
    result = run_finetune(task, g, pretrained, split.train_log, finetune_config, dim=dim)
    return evaluate_result(g, result, split, seq_len=finetune_config.seq_len, seed=finetune_config.seed), result
