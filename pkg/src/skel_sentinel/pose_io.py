"""Pose track ingestion, snippet windowing, and per-snippet normalization.

Track file format (UTF-8, LF, one pose per line):

    video_id<TAB>person_id<TAB>frame_index<TAB>x1,y1,c1;x2,y2,c2;...

with exactly one x,y,confidence triple per joint. Coordinates are pixels,
confidences live in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSnippetError,
    DuplicateRecordError,
    SchemaError,
    TrackParseError,
)

# Windows with more than this fraction of zero-filled frames are dropped,
# extending the all-zero discard rule to partial tracking dropouts.
MAX_ZERO_FRAME_FRACTION = 0.5

SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class PoseFrame:
    frame_index: int
    person_id: int
    xy: np.ndarray  # (J, 2) pixel coordinates
    confidence: np.ndarray  # (J,) in [0, 1]

    def __post_init__(self):
        if self.xy.ndim != 2 or self.xy.shape[1] != 2:
            raise SchemaError(f"keypoints must be (J, 2), got {self.xy.shape}")
        if self.confidence.shape != (self.xy.shape[0],):
            raise SchemaError("confidence length must match joint count")
        if not np.isfinite(self.xy).all():
            raise SchemaError("keypoint coordinates must be finite")
        if ((self.confidence < 0) | (self.confidence > 1)).any():
            raise SchemaError("confidences must lie in [0, 1]")


@dataclass(frozen=True)
class Track:
    video_id: str
    person_id: int
    frames: list[PoseFrame]

    def __post_init__(self):
        if not self.frames:
            raise SchemaError("track must contain at least one frame")
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise SchemaError("frame indices must be strictly increasing")
        if any(f.person_id != self.person_id for f in self.frames):
            raise SchemaError("track mixes person ids")

    @property
    def length(self) -> int:
        return self.frames[-1].frame_index - self.frames[0].frame_index + 1


@dataclass(frozen=True)
class Snippet:
    """One fixed-length window of a single person's pose sequence."""

    video_id: str
    person_id: int
    start_time: int  # frame index of the window's first frame
    joints: np.ndarray  # (2, J, T) coordinate channels
    confidence: np.ndarray  # (J, T), kept for filtering only

    @property
    def window_length(self) -> int:
        return self.joints.shape[2]

    @property
    def ref(self) -> str:
        return make_snippet_ref(self.video_id, self.person_id, self.start_time)


@dataclass(frozen=True)
class NormalizedSnippet:
    """Snippet coordinates after centroid removal and RMS rescaling."""

    joints: np.ndarray  # (2, J, T)
    confidence: np.ndarray  # (J, T)
    source: Snippet = field(repr=False)

    @property
    def ref(self) -> str:
        return self.source.ref


def make_snippet_ref(video_id: str, person_id: int, start_time: int) -> str:
    return f"{video_id}:{person_id}:{start_time}"


def parse_snippet_ref(ref: str) -> tuple[str, int, int]:
    video_id, person, start = ref.rsplit(":", 2)
    return video_id, int(person), int(start)


def load_tracks(path: str | Path, joints: int | None = None) -> dict[str, list[Track]]:
    """Read a track file into Tracks grouped by video_id.

    `joints` pins the expected joint count; None infers it from the first
    record and then enforces it. Tracks come back sorted by
    (video_id, person_id) with frames sorted by frame_index.
    """
    records: dict[tuple[str, int], dict[int, PoseFrame]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise TrackParseError(lineno, f"expected 4 tab-separated fields, got {len(parts)}")
            video_id, person_text, frame_text, pose_text = parts
            try:
                person_id = int(person_text)
                frame_index = int(frame_text)
            except ValueError as exc:
                raise TrackParseError(lineno, f"bad integer field: {exc}")
            if person_id < 0 or frame_index < 0:
                raise TrackParseError(lineno, "person_id and frame_index must be >= 0")

            triples = pose_text.split(";")
            if joints is None:
                joints = len(triples)
            if len(triples) != joints:
                raise SchemaError(
                    f"line {lineno}: expected {joints} joints, got {len(triples)}"
                )
            xy = np.empty((joints, 2), dtype=np.float64)
            conf = np.empty(joints, dtype=np.float64)
            for j, triple in enumerate(triples):
                fields = triple.split(",")
                if len(fields) != 3:
                    raise TrackParseError(lineno, f"joint {j}: expected x,y,c")
                try:
                    xy[j, 0] = float(fields[0])
                    xy[j, 1] = float(fields[1])
                    conf[j] = float(fields[2])
                except ValueError as exc:
                    raise TrackParseError(lineno, f"joint {j}: {exc}")

            key = (video_id, person_id)
            frames = records.setdefault(key, {})
            if frame_index in frames:
                raise DuplicateRecordError(
                    f"duplicate record for ({video_id}, {person_id}, {frame_index})"
                )
            try:
                frames[frame_index] = PoseFrame(frame_index, person_id, xy, conf)
            except SchemaError as exc:
                raise TrackParseError(lineno, str(exc))

    videos: dict[str, list[Track]] = {}
    for (video_id, person_id) in sorted(records):
        frames = records[(video_id, person_id)]
        ordered = [frames[i] for i in sorted(frames)]
        videos.setdefault(video_id, []).append(Track(video_id, person_id, ordered))
    return videos


def write_tracks(videos: dict[str, list[Track]], path: str | Path) -> None:
    """Inverse of load_tracks; float fields use repr so round-trips are exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for video_id in sorted(videos):
            for track in sorted(videos[video_id], key=lambda t: t.person_id):
                for frame in track.frames:
                    pose = ";".join(
                        f"{float(x)!r},{float(y)!r},{float(c)!r}"
                        for (x, y), c in zip(frame.xy, frame.confidence)
                    )
                    fh.write(f"{video_id}\t{track.person_id}\t{frame.frame_index}\t{pose}\n")


def window_snippets(track: Track, window_length: int, stride: int) -> list[Snippet]:
    """Cut a track into sliding windows, dropping zero-dominated ones.

    Gaps in the frame sequence are zero-filled first so window timestamps stay
    aligned with the source video. Windows whose zero-frame fraction exceeds
    MAX_ZERO_FRAME_FRACTION are discarded.
    """
    if window_length < 2:
        raise SchemaError("window_length must be >= 2")
    if stride < 1:
        raise SchemaError("stride must be >= 1")

    first = track.frames[0].frame_index
    length = track.length
    n_joints = track.frames[0].xy.shape[0]
    coords = np.zeros((2, n_joints, length), dtype=np.float64)
    conf = np.zeros((n_joints, length), dtype=np.float64)
    for frame in track.frames:
        t = frame.frame_index - first
        coords[0, :, t] = frame.xy[:, 0]
        coords[1, :, t] = frame.xy[:, 1]
        conf[:, t] = frame.confidence

    zero_frame = ~np.any(coords != 0.0, axis=(0, 1))  # (length,)
    snippets = []
    for offset in range(0, length - window_length + 1, stride):
        window = coords[:, :, offset : offset + window_length]
        if zero_frame[offset : offset + window_length].sum() / window_length > MAX_ZERO_FRAME_FRACTION:
            continue
        snippets.append(
            Snippet(
                video_id=track.video_id,
                person_id=track.person_id,
                start_time=first + offset,
                joints=window.copy(),
                confidence=conf[:, offset : offset + window_length].copy(),
            )
        )
    return snippets


def normalize_snippet(snippet: Snippet) -> NormalizedSnippet:
    """Translate the snippet centroid to the origin and rescale to unit RMS.

    Only valid joints (nonzero coordinates or positive confidence) move; the
    zero placeholders left by gap filling stay at zero so repeated
    normalization is a fixed point.
    """
    coords = snippet.joints
    valid = (snippet.confidence > 0) | np.any(coords != 0.0, axis=0)  # (J, T)
    if not valid.any():
        raise DegenerateSnippetError(f"{snippet.ref}: no valid joints")

    mask = valid[None, :, :]
    n_valid = valid.sum()
    centroid = coords.sum(axis=(1, 2), where=mask) / n_valid  # (2,)
    centered = np.where(mask, coords - centroid[:, None, None], 0.0)
    scale = math.sqrt(float((centered * centered).sum()) / (2 * n_valid))
    if scale < SCALE_FLOOR:
        raise DegenerateSnippetError(f"{snippet.ref}: scale {scale:.3e} below floor")
    return NormalizedSnippet(
        joints=centered / scale,
        confidence=snippet.confidence,
        source=snippet,
    )
