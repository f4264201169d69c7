"""Side-information tables and the recipes that compile them into hyperedges.

Four recipes are supported: social circles (ego plus friends), POI regions
(k-means over coordinates), brand fan circles mined from review ratings, and
item feature edges (one per brand and per category).
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyHypergraph,
    EmptyInput,
    KTooLarge,
    ParseError,
    UnknownItem,
    UnknownUser,
)
from .hypergraph import EdgeTag, Hypergraph, NodeKind, build_hypergraph

EdgeSpec = tuple  # (EdgeTag, list[int], name)


@dataclass(frozen=True)
class SocialEdge:
    user_a: str
    user_b: str

    def __post_init__(self):
        if self.user_a == self.user_b:
            raise ValueError(f"self-friendship for user {self.user_a!r}")


@dataclass(frozen=True)
class PoiRecord:
    item: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


@dataclass(frozen=True)
class ReviewRecord:
    user: str
    item: str
    brand: str
    rating: float
    timestamp: int

    def __post_init__(self):
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating {self.rating} outside [1, 5]")


@dataclass(frozen=True)
class ItemMeta:
    item: str
    brand: str | None = None
    category: str | None = None

    def __post_init__(self):
        if not self.brand and not self.category:
            raise ValueError(f"item {self.item!r} has neither brand nor category")


@dataclass
class IdMap:
    """Bijection between external keys and dense node indices, per node kind."""

    kinds: list[NodeKind] = field(default_factory=list)
    keys: list[str] = field(default_factory=list)
    _index: dict[tuple[NodeKind, str], int] = field(default_factory=dict, repr=False)

    def add(self, kind: NodeKind | str, key: str) -> int:
        kind = NodeKind(kind)
        idx = self._index.get((kind, key))
        if idx is None:
            idx = len(self.keys)
            self._index[(kind, key)] = idx
            self.kinds.append(kind)
            self.keys.append(key)
        return idx

    def index(self, kind: NodeKind | str, key: str) -> int:
        kind = NodeKind(kind)
        try:
            return self._index[(kind, key)]
        except KeyError:
            exc = UnknownUser if kind == NodeKind.USER else UnknownItem
            raise exc(f"unknown {kind.value} {key!r}") from None

    def user(self, key: str) -> int:
        return self.index(NodeKind.USER, key)

    def item(self, key: str) -> int:
        return self.index(NodeKind.ITEM, key)

    def __contains__(self, kind_key: tuple) -> bool:
        return (NodeKind(kind_key[0]), kind_key[1]) in self._index

    def __len__(self) -> int:
        return len(self.keys)

    def of_kind(self, kind: NodeKind) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k == kind], dtype=np.int64)


# ---------------------------------------------------------------------------
# TSV parsing

def iter_tsv(path: str | Path, n_fields: int) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, fields) for data lines; '#' lines and blanks skipped."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise ParseError(path, line_no, f"expected {n_fields} tab-separated fields, got {len(fields)}")
            yield line_no, fields


def _parse(path, n_fields, make):
    out = []
    for line_no, fields in iter_tsv(path, n_fields):
        try:
            out.append(make(*fields))
        except (ValueError, TypeError) as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out


def read_social(path) -> list[SocialEdge]:
    return _parse(path, 2, SocialEdge)


def read_poi(path) -> list[PoiRecord]:
    return _parse(path, 3, lambda i, lat, lon: PoiRecord(i, float(lat), float(lon)))


def read_reviews(path) -> list[ReviewRecord]:
    return _parse(
        path, 5, lambda u, i, b, r, t: ReviewRecord(u, i, b, float(r), int(t))
    )


def read_item_meta(path) -> list[ItemMeta]:
    return _parse(path, 3, lambda i, b, c: ItemMeta(i, b or None, c or None))


# ---------------------------------------------------------------------------
# recipes

def build_social_circles(edges: Iterable[SocialEdge], idmap: IdMap) -> list[EdgeSpec]:
    friends: dict[int, set[int]] = defaultdict(set)
    for edge in edges:
        a, b = idmap.user(edge.user_a), idmap.user(edge.user_b)
        # friendship lists may only carry one direction
        friends[a].add(b)
        friends[b].add(a)
    out = []
    for ego in sorted(friends):
        members = [ego] + sorted(friends[ego])
        out.append((EdgeTag.SOCIAL_CIRCLE, members, f"social:{idmap.keys[ego]}"))
    return out


@dataclass
class KMeansResult:
    labels: np.ndarray  # cluster per input point
    centroids: np.ndarray
    objective_history: list[float]
    n_iter: int

    def assignments(self, points: Sequence[PoiRecord]) -> dict[str, int]:
        return {p.item: int(c) for p, c in zip(points, self.labels)}


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _greedy_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding that keeps the best of several sampled candidates per step."""
    n_local = 2 + int(np.log(k))
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(len(x))]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a centroid; any remaining point will do
            cand = rng.integers(len(x), size=n_local)
        else:
            cand = rng.choice(len(x), size=n_local, p=closest / total)
        trial = np.minimum(closest[None, :], _sq_dists(x[cand], x))
        best = int(trial.sum(axis=1).argmin())
        centroids[j] = x[cand[best]]
        closest = trial[best]
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, tol: float, max_iter: int) -> KMeansResult:
    k = len(centroids)
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        labels = d.argmin(axis=1)
        if not history:
            history.append(float(d.min(axis=1).sum()))
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts):
            new[j] = x[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed empty clusters at the points farthest from their own centroid
            own = d[np.arange(len(x)), labels]
            order = np.argsort(-own, kind="stable")
            for j, far in zip(empty, order):
                new[j] = x[far]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        history.append(float(_sq_dists(x, centroids).min(axis=1).sum()))
        if shift < tol:
            break
    labels = _sq_dists(x, centroids).argmin(axis=1)
    return KMeansResult(labels, centroids, history, n_iter)


def kmeans(
    x: np.ndarray,
    k: int,
    seed: int = 0,
    tol: float = 1e-4,
    max_iter: int = 100,
    n_init: int = 10,
) -> KMeansResult:
    """Lloyd's algorithm from greedy k-means++ seeds; best of ``n_init`` restarts."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise EmptyInput("no points to cluster")
    if k < 1 or n_init < 1:
        raise ValueError("k and n_init must be positive")
    if k > len(np.unique(x, axis=0)):
        raise KTooLarge(f"k={k} exceeds the number of distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(x, _greedy_seeds(x, k, rng), tol, max_iter)
        if best is None or run.objective_history[-1] < best.objective_history[-1]:
            best = run
    return best


def default_region_count(n_points: int) -> int:
    return max(1, math.ceil(math.sqrt(n_points)))


def kmeans_regions(points: Sequence[PoiRecord], k: int | None = None, seed: int = 0) -> KMeansResult:
    if not points:
        raise EmptyInput("no POI records")
    if k is None:
        k = default_region_count(len(points))
    coords = np.array([[p.latitude, p.longitude] for p in points])
    return kmeans(coords, k, seed=seed)


def build_region_hyperedges(
    points: Sequence[PoiRecord], idmap: IdMap, k: int | None = None, seed: int = 0
) -> list[EdgeSpec]:
    """One PoiRegion hyperedge per cluster holding at least two items."""
    result = kmeans_regions(points, k, seed)
    clusters: dict[int, set[int]] = defaultdict(set)
    for p, c in zip(points, result.labels):
        clusters[int(c)].add(idmap.item(p.item))
    return [
        (EdgeTag.POI_REGION, sorted(mem), f"region:{c}")
        for c, mem in sorted(clusters.items())
        if len(mem) >= 2
    ]


def fan_sets(
    reviews: Iterable[ReviewRecord], rating_threshold: float = 4.0, min_reviews: int = 2
) -> dict[str, set[str]]:
    """brand -> users who reviewed it at least ``min_reviews`` times, never below threshold."""
    ratings: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in reviews:
        ratings[(r.brand, r.user)].append(r.rating)
    fans: dict[str, set[str]] = defaultdict(set)
    for (brand, user), rs in ratings.items():
        if len(rs) >= min_reviews and min(rs) >= rating_threshold:
            fans[brand].add(user)
    return dict(fans)


def mine_brand_fans(
    reviews: Sequence[ReviewRecord],
    idmap: IdMap,
    rating_threshold: float = 4.0,
    min_reviews: int = 2,
) -> list[EdgeSpec]:
    if rating_threshold <= 0 or min_reviews <= 0:
        raise ValueError("thresholds must be positive")
    out = []
    for brand, users in sorted(fan_sets(reviews, rating_threshold, min_reviews).items()):
        if len(users) >= 2:
            out.append((EdgeTag.FAN_CIRCLE, sorted(idmap.user(u) for u in users), f"fan:{brand}"))
    return out


def build_feature_hyperedges(meta: Iterable[ItemMeta], idmap: IdMap) -> list[EdgeSpec]:
    brands: dict[str, set[int]] = defaultdict(set)
    categories: dict[str, set[int]] = defaultdict(set)
    for m in meta:
        idx = idmap.item(m.item)
        if m.brand:
            brands[m.brand].add(idx)
        if m.category:
            categories[m.category].add(idx)
    out = []
    for tag, groups, prefix in ((EdgeTag.BRAND, brands, "brand"), (EdgeTag.CATEGORY, categories, "category")):
        for value, mem in sorted(groups.items()):
            if len(mem) >= 2:
                out.append((tag, sorted(mem), f"{prefix}:{value}"))
    return out


def register_nodes(
    idmap: IdMap,
    social: Iterable[SocialEdge] = (),
    poi: Iterable[PoiRecord] = (),
    reviews: Iterable[ReviewRecord] = (),
    meta: Iterable[ItemMeta] = (),
    interactions: Iterable[tuple[str, str]] = (),
) -> IdMap:
    """Register every user and item mentioned in any table, in file order."""
    for s in social:
        idmap.add(NodeKind.USER, s.user_a)
        idmap.add(NodeKind.USER, s.user_b)
    for r in reviews:
        idmap.add(NodeKind.USER, r.user)
        idmap.add(NodeKind.ITEM, r.item)
    for u, _ in interactions:
        idmap.add(NodeKind.USER, u)
    for p in poi:
        idmap.add(NodeKind.ITEM, p.item)
    for m in meta:
        idmap.add(NodeKind.ITEM, m.item)
    for _, i in interactions:
        idmap.add(NodeKind.ITEM, i)
    return idmap


def assemble(idmap: IdMap, pieces: Iterable[Sequence[EdgeSpec]]) -> Hypergraph:
    """Union of recipe outputs, with singleton edges for uncovered nodes."""
    edges = [e for piece in pieces for e in piece]
    if not edges:
        raise EmptyHypergraph("no construction recipe produced any hyperedge")
    return build_hypergraph(idmap.kinds, edges, fill_isolated=True)
