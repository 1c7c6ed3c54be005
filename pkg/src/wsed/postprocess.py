"""From masks to event lists: frame scores, thresholding and duration rules."""

import csv
from dataclasses import dataclass

import numpy as np

from .network import predict_tags
from .pooling import PoolingSpec


@dataclass
class EventAnnotation:
    """One labelled sound event with boundaries in seconds."""

    label: str
    onset: float
    offset: float

    def __post_init__(self):
        if not 0 <= self.onset < self.offset:
            raise ValueError(
                f"invalid event times onset={self.onset} offset={self.offset}"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass
class FrameScores:
    """Per-class frame activity scores, shape (n_classes, frames)."""

    v: np.ndarray
    frame_hop_seconds: float


@dataclass
class PostProcessConfig:
    hi: float = 0.2
    lo: float = 0.1
    min_dur_frames: int = 10
    min_gap_frames: int = 10
    tag_threshold: float = 0.5
    join_before_filter: bool = True

    def to_dict(self) -> dict:
        return {
            "hi": self.hi,
            "lo": self.lo,
            "min_dur_frames": self.min_dur_frames,
            "min_gap_frames": self.min_gap_frames,
            "tag_threshold": self.tag_threshold,
            "join_before_filter": self.join_before_filter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PostProcessConfig":
        return cls(**d)


def frame_scores(masks: np.ndarray, frame_hop_seconds: float) -> FrameScores:
    """Average each mask over frequency: (n_classes, T, F) -> (n_classes, T)."""
    masks = np.asarray(masks)
    return FrameScores(masks.mean(axis=2), frame_hop_seconds)


def tagging_gate(tags: np.ndarray, threshold: float) -> set:
    """Indices of classes whose tag probability strictly exceeds the threshold."""
    return set(np.flatnonzero(np.asarray(tags) > threshold).tolist())


def double_threshold(scores: np.ndarray, hi: float, lo: float) -> list:
    """Two-level segment extraction over one score track.

    A segment is a maximal run of frames >= lo that contains at least one
    frame >= hi.  Runs seeded by several high frames merge into one segment.
    Returns half-open frame ranges [(start, end), ...].
    """
    if not 0 <= lo <= hi <= 1:
        raise ValueError(f"need 0 <= lo <= hi <= 1, got lo={lo} hi={hi}")
    scores = np.asarray(scores)
    above_lo = scores >= lo
    segments = []
    t = 0
    n = len(scores)
    while t < n:
        if not above_lo[t]:
            t += 1
            continue
        start = t
        while t < n and above_lo[t]:
            t += 1
        if np.any(scores[start:t] >= hi):
            segments.append((start, t))
    return segments


def duration_filter_join(segments: list, min_frames: int,
                         min_gap_frames: int,
                         join_first: bool = True) -> list:
    """Join segments across short gaps and drop short segments.

    Gaps strictly shorter than min_gap_frames are bridged; segments
    strictly shorter than min_frames are removed.  join_first controls
    which rule runs first (joining first avoids deleting fragments of one
    long event).
    """

    def join(segs):
        out = []
        for seg in segs:
            if out and seg[0] - out[-1][1] < min_gap_frames:
                out[-1] = (out[-1][0], seg[1])
            else:
                out.append(seg)
        return out

    def drop_short(segs):
        return [s for s in segs if s[1] - s[0] >= min_frames]

    segments = sorted(segments)
    if join_first:
        return drop_short(join(segments))
    return join(drop_short(segments))


def segments_to_events(segments: list, label: str, frame_hop_seconds: float) -> list:
    """Half-open frame ranges to events: onset/offset = boundary * hop."""
    return [
        EventAnnotation(label, start * frame_hop_seconds, end * frame_hop_seconds)
        for start, end in segments
    ]


def detect_events(masks: np.ndarray, pooling: PoolingSpec,
                  frame_hop_seconds: float, labels: list,
                  config: PostProcessConfig = None):
    """Full inference post-processing for one clip.

    masks: (n_classes, T, F) segmentation masks from the network.
    Returns (events, tag probabilities); events only for classes passing
    the tagging gate, with the clip tag probability as confidence.
    """
    if config is None:
        config = PostProcessConfig()
    tags = predict_tags(masks, pooling)
    active = tagging_gate(tags, config.tag_threshold)
    scores = frame_scores(masks, frame_hop_seconds)
    events = []
    for k in sorted(active):
        segments = double_threshold(scores.v[k], config.hi, config.lo)
        segments = duration_filter_join(
            segments, config.min_dur_frames, config.min_gap_frames,
            join_first=config.join_before_filter)
        for event in segments_to_events(segments, labels[k], frame_hop_seconds):
            events.append((event, float(tags[k])))
    return events, tags


def write_events_csv(rows: list, path) -> None:
    """Detected events as CSV: clip_id,label,onset,offset,confidence.

    rows: iterables of (clip_id, EventAnnotation, confidence).  Times are
    written with three decimals, confidence is the clip tag probability.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "label", "onset", "offset", "confidence"])
        for clip_id, event, confidence in rows:
            writer.writerow([
                clip_id, event.label,
                f"{event.onset:.3f}", f"{event.offset:.3f}",
                f"{confidence:.6f}",
            ])


def read_events_csv(path) -> list:
    """Inverse of write_events_csv: [(clip_id, EventAnnotation, confidence)]."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append((
                record["clip_id"],
                EventAnnotation(record["label"], float(record["onset"]),
                                float(record["offset"])),
                float(record["confidence"]),
            ))
    return rows
