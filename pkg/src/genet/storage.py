"""On-disk formats: embedding dumps, serialized hypergraphs, flat run configs."""

from __future__ import annotations

import dataclasses
import struct
import types
import typing
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .errors import DumpFormatError, MissingCheckpoint, ParseError
from .hypergraph import EdgeTag, Hypergraph, NodeKind, build_hypergraph
from .sideinfo import IdMap, iter_tsv

MAGIC = b"GNET"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".tsv")


def write_dump(path: str | Path, matrix: np.ndarray, labels: Sequence[tuple[str, str]] | None = None) -> Path:
    """Write a float32 little-endian matrix with a 16-byte header.

    ``labels`` gives (external id, kind) per row for the sidecar TSV.
    """
    path = Path(path)
    a = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("dumps hold 2-D matrices")
    rows, dim = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, dim))
        fh.write(a.tobytes())
    if labels is not None:
        if len(labels) != rows:
            raise ValueError(f"{len(labels)} labels for {rows} rows")
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            fh.write("row\tid\tkind\n")
            for i, (key, kind) in enumerate(labels):
                fh.write(f"{i}\t{key}\t{kind}\n")
    return path


def read_dump(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"missing dump {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DumpFormatError(f"{path}: truncated header")
    magic, version, rows, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DumpFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DumpFormatError(f"{path}: unsupported version {version}")
    if len(raw) != _HEADER.size + rows * dim * 4:
        raise DumpFormatError(f"{path}: length {len(raw)} does not match {rows}x{dim} header")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, dim).copy()


def read_sidecar(path: str | Path) -> list[tuple[str, str]]:
    side = sidecar_path(path)
    if not side.exists():
        raise MissingCheckpoint(f"missing sidecar {side}")
    out = []
    with open(side, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            _, key, kind = line.rstrip("\n").split("\t")
            out.append((key, kind))
    return out


# ---------------------------------------------------------------------------
# hypergraph text format

def write_hypergraph(out_dir: str | Path, g: Hypergraph, idmap: IdMap) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gpath, ipath = out / "hypergraph.tsv", out / "idmap.tsv"
    with open(gpath, "w", encoding="utf-8") as fh:
        fh.write("# edge_id\ttag\tmembers\n")
        for e in range(g.n_edges):
            members = ",".join(str(x) for x in g.members(e))
            fh.write(f"{g.edge_names[e]}\t{g.edge_tags[e].value}\t{members}\n")
    with open(ipath, "w", encoding="utf-8") as fh:
        fh.write("# row\tkey\tkind\n")
        for i, (key, kind) in enumerate(zip(idmap.keys, idmap.kinds)):
            fh.write(f"{i}\t{key}\t{kind.value}\n")
    return gpath, ipath


def read_idmap(path: str | Path) -> IdMap:
    idmap = IdMap()
    for line_no, (row, key, kind) in iter_tsv(path, 3):
        try:
            if idmap.add(NodeKind(kind), key) != int(row):
                raise ValueError(f"row {row} out of order")
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return idmap


def read_hypergraph(graph_dir: str | Path) -> tuple[Hypergraph, IdMap]:
    graph_dir = Path(graph_dir)
    gpath, ipath = graph_dir / "hypergraph.tsv", graph_dir / "idmap.tsv"
    for p in (gpath, ipath):
        if not p.exists():
            raise MissingCheckpoint(f"missing {p}")
    idmap = read_idmap(ipath)
    edges = []
    for line_no, (name, tag, members) in iter_tsv(gpath, 3):
        try:
            edges.append((EdgeTag(tag), [int(x) for x in members.split(",")], name))
        except ValueError as exc:
            raise ParseError(gpath, line_no, str(exc)) from None
    return build_hypergraph(idmap.kinds, edges, fill_isolated=False), idmap


def node_labels(idmap: IdMap, rows: Sequence[int] | None = None) -> list[tuple[str, str]]:
    rows = range(len(idmap)) if rows is None else rows
    return [(idmap.keys[i], idmap.kinds[i].value) for i in rows]


def edge_labels(g: Hypergraph) -> list[tuple[str, str]]:
    return [(g.edge_names[e], g.edge_tags[e].value) for e in range(g.n_edges)]


# ---------------------------------------------------------------------------
# flat key=value configs

def _coerce(text: str, tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if text.strip().lower() in ("", "none"):
            return None
        return _coerce(text, args[0])
    if tp is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if tp in (int, float, str):
        return tp(text.strip())
    return tp(text.strip())


def read_config(path: str | Path, cls):
    """Parse ``key = value`` lines into ``cls`` (a dataclass); unknown keys are errors."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in names:
                raise ParseError(path, line_no, f"unknown or malformed setting {line!r}")
            try:
                values[key] = _coerce(value, hints[key])
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return values


def write_config(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if hasattr(value, "value"):
                value = value.value
            fh.write(f"{f.name} = {'' if value is None else value}\n")
