"""Deterministic synthetic datasets for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hypergraph import EdgeTag, Hypergraph, NodeKind, build_hypergraph
from .sideinfo import IdMap, ItemMeta, PoiRecord, ReviewRecord, SocialEdge


def planted(m: int, n: int) -> tuple[Hypergraph, IdMap]:
    """``m`` disjoint hyperedges of ``n`` user nodes each."""
    if m <= 0 or n < 2:
        raise ValueError("need m >= 1 hyperedges of size n >= 2")
    idmap = IdMap()
    for i in range(m * n):
        idmap.add(NodeKind.USER, f"n{i}")
    edges = [(EdgeTag.SOCIAL_CIRCLE, list(range(c * n, (c + 1) * n)), f"planted:{c}") for c in range(m)]
    return build_hypergraph(idmap.kinds, edges), idmap


def planted_labels(m: int, n: int) -> np.ndarray:
    return np.repeat(np.arange(m), n)


def blobs(
    k: int, per_blob: int = 20, sep: float = 10.0, radius: float = 0.5, seed: int = 0
) -> tuple[list[PoiRecord], np.ndarray]:
    """``k`` POI clusters on a line, ``sep`` degrees apart, points within ``radius`` of the centre."""
    if k <= 0 or per_blob <= 0 or sep <= 0 or radius <= 0:
        raise ValueError("blob parameters must be positive")
    rng = np.random.default_rng(seed)
    rows = int(120.0 // sep) + 1
    if sep * ((k - 1) // rows) > 340.0:
        raise ValueError("too many blobs for this separation")
    points, labels = [], []
    for c in range(k):
        centre = np.array([-60.0 + sep * (c % rows), -170.0 + sep * (c // rows)])
        angle = rng.uniform(0, 2 * np.pi, per_blob)
        dist = radius * np.sqrt(rng.uniform(0, 1, per_blob))
        for a, r in zip(angle, dist):
            points.append(PoiRecord(f"p{len(points)}", centre[0] + r * np.cos(a), centre[1] + r * np.sin(a)))
            labels.append(c)
    return points, np.array(labels)


@dataclass
class SyntheticFeedback:
    social: list[SocialEdge]
    poi: list[PoiRecord]
    item_meta: list[ItemMeta]
    reviews: list[ReviewRecord]
    interactions: list[tuple[str, str, int]]
    user_community: dict[str, int] = field(default_factory=dict)
    item_community: dict[str, int] = field(default_factory=dict)


def feedback(
    n_users: int = 500,
    n_items: int = 200,
    n_communities: int = 10,
    p_in: float = 0.85,
    friends: int = 3,
    min_len: int = 8,
    max_len: int = 16,
    side_noise: float = 0.2,
    seed: int = 0,
) -> SyntheticFeedback:
    """Users and items split into communities that drive both side information and feedback.

    Each interaction picks an item from the user's own community with
    probability ``p_in``, otherwise uniformly from the whole catalog.
    Friendships, POI locations, brands and fan reviews follow communities,
    except that a ``side_noise`` fraction of friendships and POI locations
    is drawn from a random community instead.
    """
    if min(n_users, n_items, n_communities, friends, min_len) <= 0 or max_len < min_len:
        raise ValueError("feedback parameters must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= side_noise <= 1.0):
        raise ValueError("p_in and side_noise must be probabilities")
    rng = np.random.default_rng(seed)
    u_comm = np.arange(n_users) % n_communities
    i_comm = np.arange(n_items) % n_communities
    rng.shuffle(u_comm)
    rng.shuffle(i_comm)
    users = [f"u{i}" for i in range(n_users)]
    items = [f"i{i}" for i in range(n_items)]
    by_comm_users = [np.flatnonzero(u_comm == c) for c in range(n_communities)]
    by_comm_items = [np.flatnonzero(i_comm == c) for c in range(n_communities)]

    social = set()
    for u in range(n_users):
        for _ in range(friends):
            comm = u_comm[u] if rng.random() >= side_noise else rng.integers(n_communities)
            peers = by_comm_users[comm]
            peers = peers[peers != u]
            if len(peers):
                f = int(rng.choice(peers))
                social.add((min(u, f), max(u, f)))
    social_edges = [SocialEdge(users[a], users[b]) for a, b in sorted(social)]

    centres = np.stack(
        [[-40.0 + 20.0 * (c % 5), -100.0 + 40.0 * (c // 5)] for c in range(n_communities)]
    )
    poi = []
    for i in range(n_items):
        comm = i_comm[i] if rng.random() >= side_noise else rng.integers(n_communities)
        lat, lon = centres[comm] + rng.normal(0.0, 0.5, size=2)
        poi.append(PoiRecord(items[i], float(np.clip(lat, -90, 90)), float(np.clip(lon, -180, 180))))

    meta = [ItemMeta(items[i], f"brand{i_comm[i]}", f"cat{i_comm[i] % max(1, n_communities // 2)}") for i in range(n_items)]

    reviews = []
    t = 0
    for u in range(n_users):
        own = by_comm_items[u_comm[u]]
        for it in rng.choice(own, size=min(2, len(own)), replace=False):
            reviews.append(ReviewRecord(users[u], items[it], f"brand{i_comm[it]}", float(rng.integers(4, 6)), t))
            t += 1
        other = int(rng.integers(n_items))
        reviews.append(ReviewRecord(users[u], items[other], f"brand{i_comm[other]}", float(rng.integers(1, 4)), t))
        t += 1

    interactions = []
    t = 0
    for u in range(n_users):
        length = int(rng.integers(min_len, max_len + 1))
        own = by_comm_items[u_comm[u]]
        seen: set[int] = set()
        for _ in range(length):
            for _attempt in range(50):
                it = int(rng.choice(own)) if rng.random() < p_in else int(rng.integers(n_items))
                if it not in seen:
                    break
            seen.add(it)
            interactions.append((users[u], items[it], t))
            t += 1
    order = rng.permutation(len(interactions))
    interactions = [interactions[i] for i in order]
    return SyntheticFeedback(
        social_edges,
        poi,
        meta,
        reviews,
        interactions,
        {users[u]: int(u_comm[u]) for u in range(n_users)},
        {items[i]: int(i_comm[i]) for i in range(n_items)},
    )


# ---------------------------------------------------------------------------
# writers

def _write(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")


def write_poi(path: Path, points: list[PoiRecord]) -> None:
    _write(path, "item\tlat\tlon", ((p.item, repr(p.latitude), repr(p.longitude)) for p in points))


def write_feedback(out_dir: str | Path, data: SyntheticFeedback) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "social": out / "social.tsv",
        "poi": out / "poi.tsv",
        "item_meta": out / "item_meta.tsv",
        "reviews": out / "reviews.tsv",
        "interactions": out / "interactions.tsv",
    }
    _write(paths["social"], "user_a\tuser_b", ((s.user_a, s.user_b) for s in data.social))
    write_poi(paths["poi"], data.poi)
    _write(paths["item_meta"], "item\tbrand\tcategory", ((m.item, m.brand or "", m.category or "") for m in data.item_meta))
    _write(
        paths["reviews"],
        "user\titem\tbrand\trating\ttimestamp",
        ((r.user, r.item, r.brand, repr(r.rating), r.timestamp) for r in data.reviews),
    )
    _write(paths["interactions"], "user\titem\ttimestamp", data.interactions)
    return paths
