"""Command-line entry point: gen, build, pretrain, finetune, eval.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .config import RunConfig
from .encoder import ParamStore
from .errors import DataError, MissingCheckpoint
from .evaluation import SplitSpec, cold_start_splits, evaluate, leave_one_out_split
from .finetune import GruParams, Pretrained, Task, run_finetune
from .hypergraph import Hypergraph, NodeKind
from .interactions import InteractionLog, read_interaction_keys, read_interactions
from .pipeline import BuildOptions, build_graph, score_function
from .pretrain import history_tsv, run_pretraining
from .sideinfo import IdMap, read_item_meta, read_poi, read_reviews, read_social
from .storage import (
    edge_labels,
    node_labels,
    read_config,
    read_dump,
    read_hypergraph,
    read_sidecar,
    write_config,
    write_dump,
    write_hypergraph,
)

log = logging.getLogger("genet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "planted":
        g, idmap = synthetic.planted(args.m, args.n)
        write_hypergraph(out, g, idmap)
        print(f"planted: {g.n_nodes} nodes, {g.n_edges} hyperedges -> {out}")
    elif args.kind == "blobs":
        points, _ = synthetic.blobs(args.m, args.n, args.sep, args.radius, args.seed)
        synthetic.write_poi(out / "poi.tsv", points)
        print(f"blobs: {len(points)} POIs in {args.m} clusters -> {out}")
    else:
        data = synthetic.feedback(
            n_users=args.users,
            n_items=args.items,
            n_communities=args.m,
            p_in=args.p_in,
            min_len=args.min_len,
            max_len=args.max_len,
            side_noise=args.side_noise,
            seed=args.seed,
        )
        synthetic.write_feedback(out, data)
        print(f"feedback: {args.users} users, {args.items} items, {len(data.interactions)} interactions -> {out}")
    return 0


def cmd_build(cfg: RunConfig) -> int:
    social = read_social(cfg.social) if cfg.social else []
    poi = read_poi(cfg.poi) if cfg.poi else []
    reviews = read_reviews(cfg.reviews) if cfg.reviews else []
    meta = read_item_meta(cfg.item_meta) if cfg.item_meta else []
    inter = read_interaction_keys(cfg.interactions) if cfg.interactions else []
    options = BuildOptions(cfg.k_regions, cfg.rating_threshold, cfg.min_reviews, cfg.seed)
    g, idmap = build_graph(social, poi, reviews, meta, inter, options)
    write_hypergraph(cfg.out, g, idmap)
    print(summary(g))
    return 0


def summary(g: Hypergraph) -> str:
    users = sum(k == NodeKind.USER for k in g.node_kinds)
    lines = [f"nodes\t{g.n_nodes}", f"users\t{users}", f"items\t{g.n_nodes - users}", f"hyperedges\t{g.n_edges}"]
    for tag, n in sorted(g.tag_counts().items(), key=lambda kv: kv[0].value):
        lines.append(f"edges:{tag.value}\t{n}")
    return "\n".join(lines)


def cmd_pretrain(cfg: RunConfig, graph_dir: str) -> int:
    g, idmap = read_hypergraph(graph_dir)
    result = run_pretraining(g, cfg.pretrain_config())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = node_labels(idmap)
    write_dump(out / "X.bin", result.X, labels)
    write_dump(out / "E.bin", result.E, edge_labels(g))
    write_dump(out / "theta.bin", result.params.theta, labels)
    write_dump(out / "w.bin", result.params.w, [(f"w{i}", "w") for i in range(result.params.dim)])
    (out / "pretrain_loss.tsv").write_text(history_tsv(result.history))
    write_config(out / "pretrain.cfg", cfg)
    if result.history:
        print(f"pretrain: {len(result.history)} epochs, objective {result.history[0].total:.4f} -> {result.history[-1].total:.4f}")
    else:
        print("pretrain: 0 epochs, dumps hold the initialisation")
    return 0


def load_pretrained(pre_dir: str | Path) -> Pretrained:
    pre = Path(pre_dir)
    X = read_dump(pre / "X.bin").astype(np.float64)
    E = read_dump(pre / "E.bin").astype(np.float64)
    theta = read_dump(pre / "theta.bin").astype(np.float64)
    w = read_dump(pre / "w.bin").astype(np.float64)
    return Pretrained(X, E, ParamStore(theta, w))


def make_split(cfg: RunConfig, log_: InteractionLog) -> SplitSpec:
    mode = cfg.eval_mode()
    if cfg.cold_start is None:
        return leave_one_out_split(log_, mode)
    users, items = cold_start_splits(log_, mode=mode)
    if cfg.cold_start == "users":
        return users
    if cfg.cold_start == "items":
        return items
    raise UsageError(f"--cold-start must be users or items, not {cfg.cold_start!r}")


def cmd_finetune(cfg: RunConfig, graph_dir: str, pre_dir: str | None) -> int:
    g, idmap = read_hypergraph(graph_dir)
    if not cfg.interactions:
        raise UsageError("finetune needs --interactions")
    log_ = read_interactions(cfg.interactions, idmap)
    split = make_split(cfg, log_)
    task = Task(cfg.task)
    if cfg.init == "pretrained":
        if pre_dir is None:
            raise UsageError("finetune needs --pretrained (or --init random)")
        pretrained = load_pretrained(pre_dir)
        if pretrained.X.shape[0] != g.n_nodes or pretrained.E.shape[0] != g.n_edges:
            raise DataError("pre-training dumps do not match the hypergraph")
    else:
        pretrained = None
    dim = None if pretrained is not None else cfg.embedding_dim
    result = run_finetune(task, g, pretrained, split.train_log, cfg.finetune_config(), dim=dim)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    users, items = g.nodes_of_kind(NodeKind.USER), g.nodes_of_kind(NodeKind.ITEM)
    write_dump(out / "U.bin", result.output[users], node_labels(idmap, users))
    write_dump(out / "V.bin", result.output[items], node_labels(idmap, items))
    if result.gru is not None:
        write_dump(out / "gru.bin", result.gru.stacked(), [(f"gru{i}", "gru") for i in range(6 * result.gru.dim + 3)])
    (out / "finetune_loss.tsv").write_text(
        "epoch\tloss\n" + "".join(f"{i}\t{v:.8g}\n" for i, v in enumerate(result.history))
    )
    write_config(out / "finetune.cfg", cfg)
    report = evaluate_dumps(out, g, idmap, split, cfg)
    (out / "metrics.tsv").write_text(report.to_tsv())
    print(report.table())
    return 0


def evaluate_dumps(ft_dir: Path, g: Hypergraph, idmap: IdMap, split: SplitSpec, cfg: RunConfig):
    """Evaluate from the float32 dumps so reloads reproduce the numbers exactly."""
    rows = []
    for name in ("U.bin", "V.bin"):
        mat = read_dump(ft_dir / name).astype(np.float64)
        idx = [idmap.index(kind, key) for key, kind in read_sidecar(ft_dir / name)]
        rows.append((idx, mat))
    dim = rows[0][1].shape[1]
    out = np.zeros((g.n_nodes, dim))
    for idx, mat in rows:
        out[idx] = mat
    gru = None
    if Task(cfg.task) == Task.SEQ:
        gru = GruParams.from_stacked(read_dump(ft_dir / "gru.bin").astype(np.float64))
    score = score_function(out, split, gru, cfg.seq_len)
    report, _ = evaluate(split, score, g.nodes_of_kind(NodeKind.ITEM), cfg.k_values(), cfg.task, cfg.seed)
    if cfg.cold_start:
        report.tags["cold_start"] = cfg.cold_start
    return report


def cmd_eval(cfg: RunConfig, graph_dir: str, ft_dir: str) -> int:
    g, idmap = read_hypergraph(graph_dir)
    ft = Path(ft_dir)
    if not (ft / "U.bin").exists():
        raise MissingCheckpoint(f"no fine-tuned dumps in {ft}")
    if not cfg.interactions:
        raise UsageError("eval needs --interactions")
    split = make_split(cfg, read_interactions(cfg.interactions, idmap))
    report = evaluate_dumps(ft, g, idmap, split, cfg)
    print(report.table())
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "metrics.tsv").write_text(report.to_tsv())
    return 0


# ---------------------------------------------------------------------------
# argument parsing

# flag -> RunConfig field, per subcommand where the meaning differs
_COMMON = {
    "embedding_dim": ("--embedding-dim", int),
    "seed": ("--seed", int),
    "loss_form": ("--loss-form", str),
    "out": ("--out", str),
    "interactions": ("--interactions", str),
}
_PRETRAIN = {
    "epochs": ("--epochs", int),
    "lr": ("--lr", float),
    "batch_size": ("--batch-size", int),
    "lam": ("--lambda", float),
    "beta1": ("--beta1", float),
    "beta2": ("--beta2", float),
    "tau": ("--tau", float),
    "k_intra": ("--k-intra", int),
}
_FINETUNE = {
    "ft_epochs": ("--epochs", int),
    "ft_lr": ("--lr", float),
    "ft_batch_size": ("--batch-size", int),
    "warm_epochs": ("--warm-epochs", int),
    "layers": ("--layers", int),
    "seq_len": ("--seq-len", int),
    "init": ("--init", str),
}
_EVAL = {
    "task": ("--task", str),
    "mode": ("--mode", str),
    "cold_start": ("--cold-start", str),
    "ks": ("--k", str),
}
_BUILD = {
    "social": ("--social", str),
    "poi": ("--poi", str),
    "reviews": ("--reviews", str),
    "item_meta": ("--item-meta", str),
    "k_regions": ("--k-regions", int),
    "rating_threshold": ("--rating-threshold", float),
    "min_reviews": ("--min-reviews", int),
}


def _add(sub, table):
    for dest, (flag, tp) in table.items():
        sub.add_argument(flag, dest=dest, type=tp, default=None)


def _add_toggles(sub):
    for name in ("np", "imp", "hscl"):
        sub.add_argument(f"--no-{name}", dest=f"{name}_enabled", action="store_const", const=False, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genet", description="Hypergraph pre-training on side information for recommendation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = subs.add_parser("gen", help="write a synthetic dataset")
    gen.add_argument("--kind", choices=("planted", "blobs", "feedback"), required=True)
    gen.add_argument("--m", type=int, default=10, help="hyperedges / blobs / communities")
    gen.add_argument("--n", type=int, default=10, help="hyperedge size / points per blob")
    gen.add_argument("--sep", type=float, default=10.0)
    gen.add_argument("--radius", type=float, default=0.5)
    gen.add_argument("--users", type=int, default=500)
    gen.add_argument("--items", type=int, default=200)
    gen.add_argument("--p-in", type=float, default=0.85)
    gen.add_argument("--min-len", type=int, default=3)
    gen.add_argument("--max-len", type=int, default=6)
    gen.add_argument("--side-noise", type=float, default=0.2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    for name, tables, extra in (
        ("build", [_BUILD], ()),
        ("pretrain", [_PRETRAIN], ("--graph",)),
        ("finetune", [_FINETUNE, _EVAL], ("--graph", "--pretrained")),
        ("eval", [_EVAL, {"seq_len": ("--seq-len", int)}], ("--graph", "--finetuned")),
    ):
        sub = subs.add_parser(name)
        sub.add_argument("--config", help="flat key=value file; flags override it")
        _add(sub, _COMMON)
        for t in tables:
            _add(sub, t)
        for flag in extra:
            sub.add_argument(flag, required=flag == "--graph" or (name == "eval"))
        if name == "pretrain":
            _add_toggles(sub)
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config, RunConfig))
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in vars(args).items():
        if key in fields and value is not None:
            values[key] = value
    return RunConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        threads = os.environ.get("GENET_THREADS")
        if threads:
            from threadpoolctl import threadpool_limits

            threadpool_limits(int(threads))
        if args.command == "gen":
            return cmd_gen(args)
        cfg = resolve_config(args)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "pretrain":
            return cmd_pretrain(cfg, args.graph)
        if args.command == "finetune":
            return cmd_finetune(cfg, args.graph, args.pretrained)
        return cmd_eval(cfg, args.graph, args.finetuned)
    except DataError as exc:
        print(f"genet: data error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as exc:
        print(f"genet: usage error: {exc}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
