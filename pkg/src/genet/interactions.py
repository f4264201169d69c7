"""Timestamped user-item feedback records."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, UnknownItem, UnknownUser
from .sideinfo import IdMap, iter_tsv


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    timestamp: int


class InteractionLog:
    """Feedback records in file order plus a per-user chronological index.

    Ties in timestamp keep record order.
    """

    def __init__(self, records: Iterable[Interaction]):
        self.records = list(records)
        by_user: dict[int, list[Interaction]] = defaultdict(list)
        for r in self.records:
            by_user[r.user].append(r)
        self.by_user = {u: sorted(rs, key=lambda r: r.timestamp) for u, rs in by_user.items()}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def pairs(self) -> list[tuple[int, int]]:
        return [(r.user, r.item) for r in self.records]

    @property
    def users(self) -> list[int]:
        return sorted(self.by_user)

    @property
    def items(self) -> list[int]:
        return sorted({r.item for r in self.records})


def read_interaction_keys(path: str | Path) -> list[tuple[str, str, int]]:
    out = []
    for line_no, (u, i, t) in iter_tsv(path, 3):
        try:
            out.append((u, i, int(t)))
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out


def read_interactions(path: str | Path, idmap: IdMap) -> InteractionLog:
    records = []
    for line_no, (u, i, t) in enumerate(read_interaction_keys(path), start=1):
        try:
            records.append(Interaction(idmap.user(u), idmap.item(i), t))
        except (UnknownUser, UnknownItem) as exc:
            raise type(exc)(f"{path}: record {line_no}: {exc.args[0]}") from None
    return InteractionLog(records)
