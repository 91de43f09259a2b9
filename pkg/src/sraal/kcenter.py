"""Greedy k-center (farthest-first) selection and its exhaustive oracle.

The greedy rule repeatedly adds the point whose distance to the nearest
chosen center is largest, which 2-approximates the minimax covering radius.
Distances are Euclidean; argmax ties break toward the smallest id so runs
are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

BRUTE_FORCE_LIMIT = 16


@dataclass
class EmbeddingSet:
    """n points of equal dimension with their dataset ids."""

    points: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(self.points) == 0:
            raise ValueError("embedding set must hold at least one point")
        if len(self.ids) != len(self.points):
            raise ValueError(f"{len(self.ids)} ids for {len(self.points)} points")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("ids must be distinct")
        if not np.isfinite(self.points).all():
            raise ValueError("points must be finite")


@dataclass
class CenterSelection:
    """Chosen ids in selection order and the covering radius they achieve."""

    chosen: list[int]
    radius: float


def _distances_to(points: np.ndarray, position: int) -> np.ndarray:
    diff = points - points[position]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _argmax_smallest_id(values: np.ndarray, ids: np.ndarray) -> int:
    best = values.max()
    candidates = np.flatnonzero(values == best)
    return int(candidates[np.argmin(ids[candidates])])


def greedy_additions(
    embeddings: EmbeddingSet, center_positions: list[int], count: int
) -> list[int]:
    """Positions of `count` farthest-first additions to the given centers."""
    points = embeddings.points
    min_dist = np.full(len(points), np.inf)
    for pos in center_positions:
        min_dist = np.minimum(min_dist, _distances_to(points, pos))
    added = []
    for _ in range(count):
        pos = _argmax_smallest_id(min_dist, embeddings.ids)
        added.append(pos)
        min_dist = np.minimum(min_dist, _distances_to(points, pos))
    return added


def greedy_kcenter(
    embeddings: EmbeddingSet,
    m: int,
    i: int = 1,
    rng: np.random.Generator | None = None,
    initial_ids=None,
) -> CenterSelection:
    """Select m centers: i uniformly random starters, then farthest-first.

    `initial_ids` replaces the random starters for reproducible traces; its
    length must equal i.
    """
    n = len(embeddings.points)
    if m > n:
        raise ValueError(f"cannot choose {m} centers from {n} points")
    if not 1 <= i <= m:
        raise ValueError(f"seed count {i} outside [1, {m}]")
    id_to_pos = {int(v): k for k, v in enumerate(embeddings.ids)}
    if initial_ids is not None:
        if len(initial_ids) != i:
            raise ValueError(f"{len(initial_ids)} initial ids given, expected {i}")
        start = [id_to_pos[int(v)] for v in initial_ids]
    else:
        if rng is None:
            raise ValueError("either rng or initial_ids is required")
        start = [int(p) for p in rng.choice(n, size=i, replace=False)]
    positions = start + greedy_additions(embeddings, start, m - i)
    chosen = [int(embeddings.ids[p]) for p in positions]
    return CenterSelection(chosen, covering_radius(embeddings, chosen))


def covering_radius(embeddings: EmbeddingSet, center_ids) -> float:
    """Largest distance from any point to its nearest center."""
    id_to_pos = {int(v): k for k, v in enumerate(embeddings.ids)}
    positions = []
    for cid in center_ids:
        if int(cid) not in id_to_pos:
            raise ValueError(f"unknown id {cid}")
        positions.append(id_to_pos[int(cid)])
    if not positions:
        raise ValueError("need at least one center")
    min_dist = np.full(len(embeddings.points), np.inf)
    for pos in positions:
        min_dist = np.minimum(min_dist, _distances_to(embeddings.points, pos))
    return float(min_dist.max())


def brute_force_optimal_radius(embeddings: EmbeddingSet, m: int) -> float:
    """Minimum covering radius over all m-subsets; exponential, so n <= 16."""
    n = len(embeddings.points)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"n={n} exceeds the exhaustive-search limit {BRUTE_FORCE_LIMIT}")
    if m > n:
        raise ValueError(f"cannot choose {m} centers from {n} points")
    points = embeddings.points
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    best = np.inf
    for subset in combinations(range(n), m):
        radius = dist[:, subset].min(axis=1).max()
        if radius < best:
            best = radius
    return float(best)
