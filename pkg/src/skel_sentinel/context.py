"""Test-time context analysis: per-video nearest-neighbor graphs over snippet
features and the uniqueness scores derived from them.

Neighbor search is an exact brute-force scan. Scenes hold at most a few
thousand snippets, and exactness is part of the contract (an approximate
index would need to reproduce these results bit for bit to be admissible).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, SchemaError, UnknownSnippetError

logger = logging.getLogger(__name__)

CROSS_PERSON = "cross_person"
SELF_INSPECTION = "self_inspection"


@dataclass(frozen=True)
class Neighborhood:
    query_ref: str
    kind: str
    members: list[tuple[str, float]]  # (snippet_ref, euclidean distance), sorted
    threshold: float  # distance of the k-th kept member; 0 when empty

    @property
    def distances(self) -> list[float]:
        return [d for _, d in self.members]


class SceneIndex:
    """Immutable per-video index of (snippet_ref, person_id, timestamp, feature)."""

    def __init__(
        self,
        video_id: str,
        refs: list[str],
        person_ids: np.ndarray,
        times: np.ndarray,
        features: np.ndarray,
    ):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        if not (len(refs) == len(person_ids) == len(times) == n):
            raise SchemaError("refs, person_ids, times, and features must align")
        pairs = set(zip(person_ids.tolist(), times.tolist()))
        if len(pairs) != n:
            raise SchemaError(f"{video_id}: (person_id, timestamp) pairs must be unique")
        self.video_id = video_id
        self.refs = list(refs)
        self.person_ids = np.asarray(person_ids, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.int64)
        self.features = features
        self._row = {ref: i for i, ref in enumerate(refs)}
        # rank of each row's ref in lexicographic order, for deterministic ties
        order = sorted(range(n), key=lambda i: refs[i])
        self._ref_rank = np.empty(n, dtype=np.int64)
        self._ref_rank[order] = np.arange(n)

    def __len__(self) -> int:
        return len(self.refs)

    def row(self, ref: str) -> int:
        try:
            return self._row[ref]
        except KeyError:
            raise UnknownSnippetError(f"{ref!r} is not in scene {self.video_id!r}")

    def _neighbors(self, query_ref: str, mask: np.ndarray, k: int, kind: str) -> Neighborhood:
        row = self.row(query_ref)
        candidates = np.flatnonzero(mask)
        if candidates.size == 0:
            return Neighborhood(query_ref, kind, [], 0.0)
        diff = self.features[candidates] - self.features[row]
        dists = np.sqrt((diff * diff).sum(axis=1))
        order = np.lexsort((self._ref_rank[candidates], dists))
        keep = candidates[order[:k]]
        kept_dists = dists[order[:k]]
        members = [(self.refs[i], float(d)) for i, d in zip(keep, kept_dists)]
        return Neighborhood(query_ref, kind, members, float(kept_dists[-1]))


def cross_person_neighbors(index: SceneIndex, query_ref: str, k: int) -> Neighborhood:
    """k nearest snippets of *other* persons, ties broken by snippet_ref."""
    if k < 1:
        raise SchemaError(f"k must be >= 1, got {k}")
    row = index.row(query_ref)
    mask = index.person_ids != index.person_ids[row]
    return index._neighbors(query_ref, mask, k, CROSS_PERSON)


def self_inspection_neighbors(
    index: SceneIndex, query_ref: str, k: int, alpha: float, window_length: int
) -> Neighborhood:
    """k nearest snippets of the *same* person outside the temporal mask
    |t_i - t_j| > alpha * window_length."""
    if k < 1:
        raise SchemaError(f"k must be >= 1, got {k}")
    if alpha < 0:
        raise SchemaError(f"alpha must be >= 0, got {alpha}")
    row = index.row(query_ref)
    gap = np.abs(index.times - index.times[row])
    mask = (index.person_ids == index.person_ids[row]) & (gap > alpha * window_length)
    return index._neighbors(query_ref, mask, k, SELF_INSPECTION)


def uniqueness_score(nc: Neighborhood, ns: Neighborhood, k: int) -> float:
    """Larger of the two neighborhood distance sums.

    With fewer than k members a branch uses k * mean(distance) so that sparse
    scenes stay comparable; with exactly k members that equals the plain sum.
    Two empty branches yield 0 (isolated snippet).
    """
    if nc.query_ref != ns.query_ref:
        raise ContractError(
            f"neighborhoods disagree on the query: {nc.query_ref!r} vs {ns.query_ref!r}"
        )
    branches = []
    for nbh in (nc, ns):
        if nbh.members:
            branches.append(k * float(np.mean(nbh.distances)))
    if not branches:
        logger.debug("snippet %s is isolated (no context neighbors)", nc.query_ref)
        return 0.0
    return max(branches)


def video_uniqueness_scores(
    index: SceneIndex, k: int, alpha: float, window_length: int
) -> tuple[dict[str, float], set[str]]:
    """Uniqueness score for every snippet in the scene, plus the isolated refs."""
    scores: dict[str, float] = {}
    isolated: set[str] = set()
    for ref in index.refs:
        nc = cross_person_neighbors(index, ref, k)
        ns = self_inspection_neighbors(index, ref, k, alpha, window_length)
        if not nc.members and not ns.members:
            isolated.add(ref)
        scores[ref] = uniqueness_score(nc, ns, k)
    return scores, isolated
