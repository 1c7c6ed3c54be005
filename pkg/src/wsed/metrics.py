"""Evaluation metrics: F-scores, AUC, average precision, collar matching, ER.

The same primitives serve all four evaluation levels: clip tagging,
frame-wise detection, T-F unit segmentation and event-wise detection with
collar-matched boundaries and the insertion/deletion/substitution error
rate decomposition.
"""

from dataclasses import dataclass

import numpy as np

from .postprocess import EventAnnotation


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn)


@dataclass
class CollarSpec:
    """Boundary tolerances for event matching (seconds / fraction)."""

    onset_collar: float = 0.2
    offset_collar_abs: float = 0.2
    offset_collar_rel: float = 0.5

    def __post_init__(self):
        if min(self.onset_collar, self.offset_collar_abs,
               self.offset_collar_rel) < 0:
            raise ValueError("collars must be non-negative")


@dataclass
class ErComponents:
    s: int
    d: int
    i: int
    n_ref: int

    @property
    def er(self):
        if self.n_ref == 0:
            return None
        return (self.s + self.d + self.i) / self.n_ref


def precision_recall_f1(counts: ConfusionCounts):
    """P, R and F1 with the 0/0 -> 0 convention."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def auc(scores, labels):
    """Area under the ROC curve via the rank statistic, ties counted half.

    Returns None when only one class is present (undefined, excluded from
    averages by callers).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels):
    """Mean precision at the rank of each positive, descending score order.

    Ties keep input order.  Returns None when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if not labels.any():
        return None
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    cum_tp = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1)
    precisions = cum_tp[hits] / ranks[hits]
    return float(precisions.mean())


def frame_counts(pred_scores: np.ndarray, ref_activity: np.ndarray,
                 threshold: float) -> list:
    """Per-class confusion counts over frames; predictions binarized at > threshold."""
    pred_scores = np.asarray(pred_scores)
    ref_activity = np.asarray(ref_activity).astype(bool)
    if pred_scores.shape != ref_activity.shape:
        raise ValueError(
            f"prediction shape {pred_scores.shape} vs reference "
            f"{ref_activity.shape}"
        )
    pred = pred_scores > threshold
    out = []
    for k in range(pred.shape[0]):
        tp = int(np.sum(pred[k] & ref_activity[k]))
        fp = int(np.sum(pred[k] & ~ref_activity[k]))
        fn = int(np.sum(~pred[k] & ref_activity[k]))
        out.append(ConfusionCounts(tp, fp, fn))
    return out


def tf_counts(pred_masks: np.ndarray, ref_masks: np.ndarray,
              threshold: float, ref_threshold: float = 0.5) -> list:
    """Per-class confusion counts over T-F units.

    Both stacks must share one resolution (evaluation runs at mel
    resolution; reference ratio masks are downsampled first).  The
    reference binarizes at > ref_threshold, predictions at > threshold.
    """
    pred_masks = np.asarray(pred_masks)
    ref_masks = np.asarray(ref_masks)
    if pred_masks.shape != ref_masks.shape:
        raise ValueError(
            f"prediction shape {pred_masks.shape} vs reference "
            f"{ref_masks.shape}"
        )
    k = pred_masks.shape[0]
    return frame_counts(pred_masks.reshape(k, -1) ,
                        ref_masks.reshape(k, -1) > ref_threshold, threshold)


def _offsets_match(ref: EventAnnotation, est: EventAnnotation,
                   collars: CollarSpec) -> bool:
    tolerance = max(collars.offset_collar_abs,
                    collars.offset_collar_rel * ref.duration)
    return abs(ref.offset - est.offset) <= tolerance


def match_events(refs: list, ests: list,
                 collars: CollarSpec = None) -> dict:
    """Greedy one-to-one collar matching within one clip.

    A same-class pair matches when the onset difference is within the
    onset collar and the offset difference within the larger of the
    absolute and duration-relative offset collars.  Pairs are taken in
    ascending order of onset difference.  Returns {label: ConfusionCounts}
    for every label present in refs or ests.
    """
    if collars is None:
        collars = CollarSpec()
    candidates = []
    for ri, ref in enumerate(refs):
        for ei, est in enumerate(ests):
            if ref.label != est.label:
                continue
            if abs(ref.onset - est.onset) > collars.onset_collar:
                continue
            if not _offsets_match(ref, est, collars):
                continue
            candidates.append((abs(ref.onset - est.onset), ri, ei))
    candidates.sort()
    ref_used = [False] * len(refs)
    est_used = [False] * len(ests)
    matched_per_label = {}
    for _, ri, ei in candidates:
        if ref_used[ri] or est_used[ei]:
            continue
        ref_used[ri] = True
        est_used[ei] = True
        label = refs[ri].label
        matched_per_label[label] = matched_per_label.get(label, 0) + 1
    labels = {e.label for e in refs} | {e.label for e in ests}
    out = {}
    for label in sorted(labels):
        tp = matched_per_label.get(label, 0)
        n_ref = sum(1 for e in refs if e.label == label)
        n_est = sum(1 for e in ests if e.label == label)
        out[label] = ConfusionCounts(tp, n_est - tp, n_ref - tp)
    return out


def error_rate(per_clip_counts) -> ErComponents:
    """Substitution/deletion/insertion totals from per-clip event counts.

    Each input entry is one aggregation unit (one clip, or one clip and
    class); S = min(FN, FP), D = max(0, FN - FP), I = max(0, FP - FN) are
    computed per unit and summed.  ER normalizes by the total reference
    events and is None when there are none.
    """
    s = d = i = n_ref = 0
    for counts in per_clip_counts:
        s += min(counts.fn, counts.fp)
        d += max(0, counts.fn - counts.fp)
        i += max(0, counts.fp - counts.fn)
        n_ref += counts.tp + counts.fn
    return ErComponents(s, d, i, n_ref)
