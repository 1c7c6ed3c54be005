"""Mini-batch training on weak labels, with deterministic order and checkpoints."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .containers import read_checkpoint_file, write_checkpoint_file
from .dsp import FeatureConfig, extract_logmel, read_wav
from .manifest import load_manifest, manifest_labels, resolve, weak_label_vector
from .network import NetworkConfig, SegmentationNetwork, desk_config
from .nn import Adam, bce_loss
from .pooling import PoolingSpec, pool_batch


@dataclass
class TrainConfig:
    pooling: PoolingSpec
    batch_size: int = 24
    lr: float = 0.001
    epochs: int = 30
    seed: int = 0
    positive_only_loss: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "pooling": self.pooling.to_dict(),
            "batch_size": self.batch_size,
            "lr": self.lr,
            "epochs": self.epochs,
            "seed": self.seed,
            "positive_only_loss": self.positive_only_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["pooling"] = PoolingSpec.from_dict(d["pooling"])
        return cls(**d)


@dataclass
class Checkpoint:
    """Everything needed to resume or run inference: weights, stats, config."""

    network_config: NetworkConfig
    feature_config: FeatureConfig
    train_config: TrainConfig
    labels: list
    tensors: dict
    epoch: int
    adam_step_count: int = 0

    def build_network(self, dtype=np.float32) -> SegmentationNetwork:
        net = SegmentationNetwork(self.network_config, seed=0, dtype=dtype)
        net.load_tensors({
            k: v for k, v in self.tensors.items()
            if not k.startswith("adam.")
        })
        return net


def make_batches(clip_ids: list, batch_size: int, seed: int, epoch: int) -> list:
    """Deterministic shuffle keyed by (seed, epoch); short last batch kept."""
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(clip_ids))
    shuffled = [clip_ids[i] for i in order]
    return [shuffled[i:i + batch_size]
            for i in range(0, len(shuffled), batch_size)]


def train_step(net: SegmentationNetwork, optimizer: Adam, x: np.ndarray,
               y: np.ndarray, pooling: PoolingSpec,
               positive_only: bool = False, freeze_bn: bool = False) -> float:
    """One optimizer step on a batch; returns the mean per-clip loss.

    x: (batch, time, mels, 1) features; y: (batch, n_classes) weak labels.
    """
    batch = x.shape[0]
    masks = net.forward_batch(x, train=True, freeze_bn=freeze_bn)
    b, t, f, k = masks.shape
    flat = masks.transpose(0, 3, 1, 2).reshape(b * k, t * f)
    tag_values, pool_grads = pool_batch(flat, pooling)
    loss, dp = bce_loss(tag_values, y.reshape(-1), positive_only=positive_only)
    loss /= batch
    dp = dp / batch
    dmasks = (pool_grads * dp[:, None]).reshape(b, k, t, f).transpose(0, 2, 3, 1)
    net.backward_batch(np.ascontiguousarray(dmasks, dtype=masks.dtype))
    optimizer.step(net.params(), net.grads())
    return loss


def load_fold_features(manifest_path, fold: int, feature_config: FeatureConfig,
                       train_split: bool = True):
    """Features and weak labels for one side of a fold split.

    With train_split=True returns the clips whose fold differs from `fold`
    (fold k is the held-out test split).
    """
    records = load_manifest(manifest_path)
    labels = manifest_labels(records)
    selected = [r for r in records
                if (r.fold != fold) == train_split]
    if not selected:
        raise ValueError(
            f"no clips on the {'train' if train_split else 'test'} side of "
            f"fold {fold}"
        )
    features = {}
    targets = {}
    for record in selected:
        wav = read_wav(resolve(record.mixture, manifest_path))
        if wav.sample_rate != feature_config.sample_rate:
            raise ValueError(
                f"{record.clip_id}: sample rate {wav.sample_rate} does not "
                f"match feature config {feature_config.sample_rate}"
            )
        feat = extract_logmel(wav, feature_config)
        features[record.clip_id] = feat.values.astype(np.float32)
        targets[record.clip_id] = weak_label_vector(record, labels)
    return selected, labels, features, targets


def train(manifest_path, fold: int, config: TrainConfig,
          network_config: NetworkConfig = None,
          feature_config: FeatureConfig = None,
          progress=None):
    """Train on every fold except `fold`; returns (Checkpoint, epoch losses)."""
    if feature_config is None:
        feature_config = FeatureConfig()
    records, labels, features, targets = load_fold_features(
        manifest_path, fold, feature_config, train_split=True)
    if network_config is None:
        network_config = desk_config(len(labels),
                                     n_mels=feature_config.n_mels)
    if network_config.n_classes != len(labels):
        raise ValueError(
            f"network has {network_config.n_classes} classes but the "
            f"manifest defines {len(labels)}"
        )
    lengths = {f.shape[0] for f in features.values()}
    if len(lengths) != 1:
        raise ValueError(
            f"clips have differing frame counts {sorted(lengths)}; "
            f"mini-batching requires equal-length clips"
        )
    net = SegmentationNetwork(network_config, seed=config.seed)
    optimizer = Adam(lr=config.lr)
    clip_ids = [r.clip_id for r in records]
    epoch_losses = []
    for epoch in range(config.epochs):
        batches = make_batches(clip_ids, config.batch_size, config.seed, epoch)
        total = 0.0
        for batch_ids in batches:
            x = np.stack([features[c] for c in batch_ids])[..., None]
            y = np.stack([targets[c] for c in batch_ids])
            loss = train_step(net, optimizer, x, y, config.pooling,
                              positive_only=config.positive_only_loss)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"loss became non-finite at epoch {epoch}; aborting "
                    f"(lr={config.lr}, pooling={config.pooling.kind})"
                )
            total += loss * len(batch_ids)
        epoch_losses.append(total / len(clip_ids))
        if progress is not None:
            progress(epoch, epoch_losses[-1])
    tensors = {}
    tensors.update(net.params())
    tensors.update(net.bn_state())
    tensors.update(optimizer.state_tensors())
    checkpoint = Checkpoint(
        network_config=network_config,
        feature_config=feature_config,
        train_config=config,
        labels=labels,
        tensors=tensors,
        epoch=config.epochs,
        adam_step_count=optimizer.step_count,
    )
    return checkpoint, epoch_losses


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    config = {
        "format": "wsed-checkpoint",
        "version": __version__,
        "network": checkpoint.network_config.to_dict(),
        "feature": checkpoint.feature_config.to_dict(),
        "train": checkpoint.train_config.to_dict(),
        "labels": checkpoint.labels,
        "epoch": checkpoint.epoch,
        "adam_step_count": checkpoint.adam_step_count,
    }
    write_checkpoint_file(path, checkpoint.tensors, config)


def load_checkpoint(path) -> Checkpoint:
    tensors, config = read_checkpoint_file(path)
    return Checkpoint(
        network_config=NetworkConfig.from_dict(config["network"]),
        feature_config=FeatureConfig.from_dict(config["feature"]),
        train_config=TrainConfig.from_dict(config["train"]),
        labels=list(config["labels"]),
        tensors=tensors,
        epoch=int(config["epoch"]),
        adam_step_count=int(config.get("adam_step_count", 0)),
    )


def save_loss_log(losses: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses):
            fh.write(f"{epoch},{loss:.6f}\n")
