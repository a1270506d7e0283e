"""Glue between stages: tracks -> snippets -> features -> per-video scores.

Kept separate from the CLI so benchmark orchestration and tests can drive the
same code paths directly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .context import SceneIndex, video_uniqueness_scores
from .errors import DegenerateSnippetError, MissingEmbeddingError
from .featurize import FeatureStore, kinematic_features
from .flow import FlowModel, typicality_score
from .pose_io import NormalizedSnippet, Track, normalize_snippet, window_snippets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SnippetMeta:
    video_id: str
    person_id: int
    start_time: int


def extract_snippets(
    videos: dict[str, list[Track]], window_length: int, stride: int
) -> list[NormalizedSnippet]:
    """Window and normalize every track; degenerate snippets are dropped."""
    out: list[NormalizedSnippet] = []
    dropped = 0
    for video_id in sorted(videos):
        for track in videos[video_id]:
            for snippet in window_snippets(track, window_length, stride):
                try:
                    out.append(normalize_snippet(snippet))
                except DegenerateSnippetError:
                    dropped += 1
    if dropped:
        logger.info("dropped %d degenerate snippet(s)", dropped)
    return out


def featurize_snippets(
    snippets: list[NormalizedSnippet], dim: int, seed: int
) -> tuple[list[str], np.ndarray, dict[str, SnippetMeta]]:
    refs: list[str] = []
    rows: list[np.ndarray] = []
    meta: dict[str, SnippetMeta] = {}
    for snip in snippets:
        vec = kinematic_features(snip, dim, seed)
        refs.append(vec.snippet_ref)
        rows.append(vec.values)
        src = snip.source
        meta[vec.snippet_ref] = SnippetMeta(src.video_id, src.person_id, src.start_time)
    matrix = np.vstack(rows) if rows else np.empty((0, dim))
    return refs, matrix, meta


def snippet_features_from_store(
    snippets: list[NormalizedSnippet], store: FeatureStore
) -> tuple[list[str], np.ndarray, dict[str, SnippetMeta]]:
    """Align precomputed embeddings with the snippets derived from the tracks."""
    refs: list[str] = []
    rows: list[np.ndarray] = []
    meta: dict[str, SnippetMeta] = {}
    for snip in snippets:
        ref = snip.ref
        if ref not in store:
            raise MissingEmbeddingError(f"feature store has no row for {ref!r}")
        refs.append(ref)
        rows.append(store.lookup(ref).astype(np.float64))
        src = snip.source
        meta[ref] = SnippetMeta(src.video_id, src.person_id, src.start_time)
    matrix = np.vstack(rows) if rows else np.empty((0, store.dimension))
    return refs, matrix, meta


def build_scene_indices(
    refs: list[str], matrix: np.ndarray, meta: dict[str, SnippetMeta]
) -> dict[str, SceneIndex]:
    grouped: dict[str, list[int]] = {}
    for i, ref in enumerate(refs):
        grouped.setdefault(meta[ref].video_id, []).append(i)
    indices = {}
    for video_id in sorted(grouped):
        rows = grouped[video_id]
        indices[video_id] = SceneIndex(
            video_id=video_id,
            refs=[refs[i] for i in rows],
            person_ids=np.array([meta[refs[i]].person_id for i in rows]),
            times=np.array([meta[refs[i]].start_time for i in rows]),
            features=matrix[rows],
        )
    return indices


@dataclass(frozen=True)
class VideoScores:
    video_id: str
    refs: list[str]
    person_ids: list[int]
    start_times: list[int]
    typicality: np.ndarray
    uniqueness: np.ndarray
    isolated: set[str]


def score_scene(
    model: FlowModel, index: SceneIndex, cfg: RunConfig
) -> VideoScores:
    st = typicality_score(model, index.features)
    su_map, isolated = video_uniqueness_scores(
        index, cfg.k_neighbors, cfg.alpha, cfg.window_length
    )
    su = np.array([su_map[ref] for ref in index.refs])
    return VideoScores(
        video_id=index.video_id,
        refs=list(index.refs),
        person_ids=index.person_ids.tolist(),
        start_times=index.times.tolist(),
        typicality=np.asarray(st, dtype=np.float64),
        uniqueness=su,
        isolated=isolated,
    )


def score_scenes(
    model: FlowModel,
    indices: dict[str, SceneIndex],
    cfg: RunConfig,
    threads: int = 1,
) -> dict[str, VideoScores]:
    """Score each video independently; results keyed and ordered by video_id."""
    ordered = sorted(indices)
    if threads <= 1 or len(ordered) <= 1:
        return {vid: score_scene(model, indices[vid], cfg) for vid in ordered}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda vid: score_scene(model, indices[vid], cfg), ordered))
    return {vid: res for vid, res in zip(ordered, results)}
