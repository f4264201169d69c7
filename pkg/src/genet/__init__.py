"""Hypergraph pre-training on side information for recommendation."""

from .encoder import ParamStore, encode
from .errors import DataError, GenetError
from .hypergraph import EdgeTag, Hypergraph, NodeKind, build_hypergraph
from .pretrain import PretrainConfig, run_pretraining

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "EdgeTag",
    "GenetError",
    "Hypergraph",
    "NodeKind",
    "ParamStore",
    "PretrainConfig",
    "build_hypergraph",
    "encode",
    "run_pretraining",
]
