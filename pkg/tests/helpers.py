"""Independent oracles shared by the metric tests and the acceptance suite."""

import numpy as np


def _pair_compatible(ref, est, onset_collar, offset_abs, offset_rel):
    if ref.label != est.label:
        return False
    if abs(ref.onset - est.onset) > onset_collar:
        return False
    tol = max(offset_abs, offset_rel * (ref.offset - ref.onset))
    return abs(ref.offset - est.offset) <= tol


def brute_force_tp(refs, ests, onset_collar=0.2, offset_abs=0.2,
                   offset_rel=0.5):
    """Maximum achievable true positives over all one-to-one matchings.

    Exhaustive recursion over assignments, run independently per class.
    Only intended for small instances (a handful of events per clip).
    """
    total = 0
    for label in {e.label for e in refs} | {e.label for e in ests}:
        r = [e for e in refs if e.label == label]
        s = [e for e in ests if e.label == label]
        compat = [
            [_pair_compatible(a, b, onset_collar, offset_abs, offset_rel)
             for b in s]
            for a in r
        ]

        def best(ri, used):
            if ri == len(r):
                return 0
            # leave ref ri unmatched
            score = best(ri + 1, used)
            for ei in range(len(s)):
                if compat[ri][ei] and not used & (1 << ei):
                    score = max(score, 1 + best(ri + 1, used | (1 << ei)))
            return score

        total += best(0, 0)
    return total


def random_event_instance(rng, labels=("a", "b", "c"), clip_len=10.0,
                          max_events=6):
    """Random reference/estimate event lists with onsets likely to collide."""
    from wsed.postprocess import EventAnnotation

    def make(n, anchor_times=None):
        events = []
        for i in range(n):
            if anchor_times and rng.uniform() < 0.7:
                onset = float(np.clip(
                    rng.choice(anchor_times) + rng.normal(0, 0.25),
                    0.0, clip_len - 0.4))
            else:
                onset = float(rng.uniform(0, clip_len - 0.5))
            duration = float(rng.uniform(0.2, 2.0))
            offset = min(onset + duration, clip_len)
            events.append(EventAnnotation(str(rng.choice(labels)), onset, offset))
        return events

    refs = make(rng.integers(0, max_events + 1))
    anchors = [e.onset for e in refs]
    ests = make(rng.integers(0, max_events + 1), anchor_times=anchors or None)
    return refs, ests
