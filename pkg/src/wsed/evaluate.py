"""Held-out fold evaluation at all four levels: tagging, frame, event, T-F."""

from dataclasses import dataclass, field

import numpy as np

from .dsp import Waveform, extract_logmel, mel_filterbank, read_wav, stft
from .manifest import load_manifest, manifest_labels, resolve, weak_label_vector
from .metrics import (
    CollarSpec,
    ConfusionCounts,
    auc,
    average_precision,
    error_rate,
    frame_counts,
    match_events,
    precision_recall_f1,
    tf_counts,
)
from .postprocess import EventAnnotation, PostProcessConfig, detect_events, frame_scores
from .separation import ideal_ratio_mask, mel_downsample_mask
from .training import Checkpoint


@dataclass
class EvalConfig:
    frame_threshold: float = 0.2
    tf_threshold: float = 0.5
    postprocess: PostProcessConfig = field(default_factory=PostProcessConfig)
    collars: CollarSpec = field(default_factory=CollarSpec)

    def to_dict(self) -> dict:
        return {
            "frame_threshold": self.frame_threshold,
            "tf_threshold": self.tf_threshold,
            "postprocess": self.postprocess.to_dict(),
            "collars": {
                "onset_collar": self.collars.onset_collar,
                "offset_collar_abs": self.collars.offset_collar_abs,
                "offset_collar_rel": self.collars.offset_collar_rel,
            },
        }


def reference_frame_activity(events: list, n_frames: int, hop_seconds: float,
                             labels: list) -> np.ndarray:
    """Binary (n_classes, frames) activity; frame t spans [t, t+1) * hop."""
    activity = np.zeros((len(labels), n_frames), dtype=bool)
    index = {label: i for i, label in enumerate(labels)}
    starts = np.arange(n_frames) * hop_seconds
    ends = starts + hop_seconds
    for event in events:
        k = index[event.label]
        activity[k] |= (starts < event.offset) & (ends > event.onset)
    return activity


def reference_mel_masks(record, manifest_path, mix_spec, filterbank,
                        labels: list) -> np.ndarray:
    """Per-class ideal ratio masks against the mixture, at mel resolution."""
    index = {label: i for i, label in enumerate(labels)}
    n_frames = mix_spec.num_frames
    out = np.zeros((len(labels), n_frames, filterbank.n_mels))
    per_class = {}
    for event in record.events:
        src = read_wav(resolve(event.source, manifest_path))
        if event.label in per_class:
            per_class[event.label] = per_class[event.label] + src.samples
        else:
            per_class[event.label] = src.samples
    for label, samples in per_class.items():
        src_spec = stft(Waveform(samples, mix_spec.sample_rate),
                        mix_spec.window_size, mix_spec.hop)
        irm = ideal_ratio_mask(src_spec, mix_spec)
        out[index[label]] = mel_downsample_mask(irm, filterbank)
    return out


def _score_block(counts: ConfusionCounts, scores, label_flags):
    _, _, f1 = precision_recall_f1(counts)
    return {
        "f1": f1,
        "auc": auc(scores, label_flags),
        "ap": average_precision(scores, label_flags),
    }


def _macro(per_class: dict) -> dict:
    f1s = [b["f1"] for b in per_class.values()]
    aucs = [b["auc"] for b in per_class.values() if b["auc"] is not None]
    aps = [b["ap"] for b in per_class.values() if b["ap"] is not None]
    return {
        "f1": float(np.mean(f1s)) if f1s else 0.0,
        "auc": float(np.mean(aucs)) if aucs else None,
        "map": float(np.mean(aps)) if aps else None,
    }


def evaluate_fold(checkpoint: Checkpoint, manifest_path, fold: int,
                  eval_config: EvalConfig = None) -> dict:
    """Run the checkpoint over the held-out fold and score every level."""
    if eval_config is None:
        eval_config = EvalConfig()
    records = load_manifest(manifest_path)
    labels = manifest_labels(records)
    if labels != checkpoint.labels:
        raise ValueError(
            f"manifest classes {labels} differ from checkpoint classes "
            f"{checkpoint.labels}"
        )
    test_records = [r for r in records if r.fold == fold]
    if not test_records:
        raise ValueError(f"fold {fold} contains no clips")
    net = checkpoint.build_network()
    feature_config = checkpoint.feature_config
    pooling = checkpoint.train_config.pooling
    filterbank = mel_filterbank(
        feature_config.sample_rate, feature_config.window_size,
        feature_config.n_mels, feature_config.f_min, feature_config.f_max)
    hop_seconds = feature_config.hop / feature_config.sample_rate
    k = len(labels)

    tag_scores = [[] for _ in range(k)]
    tag_refs = [[] for _ in range(k)]
    tag_counts = [ConfusionCounts() for _ in range(k)]
    frame_totals = [ConfusionCounts() for _ in range(k)]
    frame_pool_scores = [[] for _ in range(k)]
    frame_pool_refs = [[] for _ in range(k)]
    event_totals = [ConfusionCounts() for _ in range(k)]
    event_units = [[] for _ in range(k)]
    tf_totals = [ConfusionCounts() for _ in range(k)]
    tf_pool_scores = [[] for _ in range(k)]
    tf_pool_refs = [[] for _ in range(k)]

    for record in test_records:
        wav = read_wav(resolve(record.mixture, manifest_path))
        feat = extract_logmel(wav, feature_config)
        masks = net.infer_masks(feat)
        detected, tags = detect_events(masks, pooling, hop_seconds, labels,
                                       eval_config.postprocess)
        weak = weak_label_vector(record, labels)
        scores = frame_scores(masks, hop_seconds)
        activity = reference_frame_activity(
            [EventAnnotation(e.label, e.onset, e.offset)
             for e in record.events],
            masks.shape[1], hop_seconds, labels)
        mix_spec = stft(wav, feature_config.window_size, feature_config.hop)
        ref_masks = reference_mel_masks(record, manifest_path, mix_spec,
                                        filterbank, labels)

        ests = [event for event, _ in detected]
        refs = [EventAnnotation(e.label, e.onset, e.offset)
                for e in record.events]
        matches = match_events(refs, ests, eval_config.collars)

        per_frame = frame_counts(scores.v, activity,
                                 eval_config.frame_threshold)
        per_tf = tf_counts(masks, ref_masks, eval_config.tf_threshold)
        for i, label in enumerate(labels):
            tag_scores[i].append(float(tags[i]))
            tag_refs[i].append(bool(weak[i]))
            predicted = tags[i] > eval_config.postprocess.tag_threshold
            if predicted and weak[i]:
                tag_counts[i].tp += 1
            elif predicted:
                tag_counts[i].fp += 1
            elif weak[i]:
                tag_counts[i].fn += 1
            frame_totals[i] += per_frame[i]
            frame_pool_scores[i].append(scores.v[i])
            frame_pool_refs[i].append(activity[i])
            tf_totals[i] += per_tf[i]
            tf_pool_scores[i].append(masks[i].ravel())
            tf_pool_refs[i].append(ref_masks[i].ravel()
                                   > eval_config.tf_threshold)
            clip_counts = matches.get(label, ConfusionCounts())
            event_totals[i] += clip_counts
            event_units[i].append(clip_counts)

    tagging_block = {}
    frame_block = {}
    tf_block = {}
    event_block = {}
    for i, label in enumerate(labels):
        tagging_block[label] = _score_block(
            tag_counts[i], tag_scores[i], tag_refs[i])
        frame_block[label] = _score_block(
            frame_totals[i],
            np.concatenate(frame_pool_scores[i]),
            np.concatenate(frame_pool_refs[i]))
        tf_block[label] = _score_block(
            tf_totals[i],
            np.concatenate(tf_pool_scores[i]),
            np.concatenate(tf_pool_refs[i]))
        _, _, event_f1 = precision_recall_f1(event_totals[i])
        er = error_rate(event_units[i])
        event_block[label] = {
            "f1": event_f1, "er": er.er, "s": er.s, "d": er.d, "i": er.i,
        }

    all_units = [c for units in event_units for c in units]
    overall_er = error_rate(all_units)
    event_macro = {
        "f1": float(np.mean([b["f1"] for b in event_block.values()])),
        "er": overall_er.er,
        "s": overall_er.s,
        "d": overall_er.d,
        "i": overall_er.i,
    }

    return {
        "fold": fold,
        "n_clips": len(test_records),
        "eval_config": eval_config.to_dict(),
        "checkpoint_config": {
            "network": checkpoint.network_config.to_dict(),
            "feature": checkpoint.feature_config.to_dict(),
            "train": checkpoint.train_config.to_dict(),
            "labels": checkpoint.labels,
            "epoch": checkpoint.epoch,
        },
        "tagging": {"per_class": tagging_block, "macro": _macro(tagging_block)},
        "frame": {"per_class": frame_block, "macro": _macro(frame_block)},
        "event": {"per_class": event_block, "macro": event_macro},
        "tf": {"per_class": tf_block, "macro": _macro(tf_block)},
    }
