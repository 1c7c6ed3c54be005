"""Fully convolutional segmentation network producing per-class T-F masks.

The network maps a log mel spectrogram to one sigmoid mask per sound class
at the input's full time-frequency resolution: stacked 3x3 conv + batch
norm + ReLU blocks with no downsampling, then a 1x1 sigmoid head.  A
global pooling over each mask yields the clip-level tag probabilities.
"""

from dataclasses import dataclass, field

import numpy as np

from .dsp import LogMelSpectrogram
from .nn import BatchNorm2d, Conv2d, ReLU, Sigmoid
from .pooling import PoolingSpec, pool_batch


@dataclass
class NetworkConfig:
    n_mels: int
    n_classes: int
    block_channels: list = field(default_factory=lambda: [32, 64, 128, 128])
    convs_per_block: int = 2

    def __post_init__(self):
        if not self.block_channels:
            raise ValueError("block_channels must be non-empty")
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if any(c < 1 for c in self.block_channels):
            raise ValueError("invalid channel list")

    def to_dict(self) -> dict:
        return {
            "n_mels": self.n_mels,
            "n_classes": self.n_classes,
            "block_channels": list(self.block_channels),
            "convs_per_block": self.convs_per_block,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def desk_config(n_classes: int, n_mels: int = 40) -> NetworkConfig:
    """Small configuration that trains in minutes on a laptop."""
    return NetworkConfig(n_mels=n_mels, n_classes=n_classes,
                         block_channels=[16, 32], convs_per_block=2)


class SegmentationNetwork:
    """Stack of conv blocks plus a per-class sigmoid mask head."""

    def __init__(self, config: NetworkConfig, seed: int, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self._convs = []
        self._bns = []
        self._relus = []
        self._names = []
        in_ch = 1
        for bi, out_ch in enumerate(config.block_channels):
            for ci in range(config.convs_per_block):
                self._convs.append(Conv2d(in_ch, out_ch, 3, rng, dtype=dtype))
                self._bns.append(BatchNorm2d(out_ch, dtype=dtype))
                self._relus.append(ReLU())
                self._names.append(f"block{bi}.conv{ci}")
                in_ch = out_ch
        self.head = Conv2d(in_ch, config.n_classes, 1, rng, dtype=dtype)
        self._sigmoid = Sigmoid()

    def forward_batch(self, x: np.ndarray, train: bool = False,
                      freeze_bn: bool = False) -> np.ndarray:
        """(batch, time, mels, 1) -> (batch, time, mels, n_classes) masks."""
        if x.ndim != 4 or x.shape[3] != 1:
            raise ValueError("expected input of shape (batch, time, mels, 1)")
        if x.shape[2] != self.config.n_mels:
            raise ValueError(
                f"input has {x.shape[2]} mel bins, network expects "
                f"{self.config.n_mels}"
            )
        h = x
        for conv, bn, act in zip(self._convs, self._bns, self._relus):
            h = conv.forward(h, train)
            h = bn.forward(h, train, use_batch_stats=not freeze_bn)
            h = act.forward(h, train)
        return self._sigmoid.forward(self.head.forward(h, train), train)

    def backward_batch(self, dmasks: np.ndarray,
                       need_input_grad: bool = False) -> np.ndarray:
        """Backpropagate mask gradients; fills every layer's param grads.

        The gradient with respect to the input spectrogram is only
        computed on request; training never needs it.
        """
        g = self.head.backward(self._sigmoid.backward(dmasks))
        last = len(self._convs) - 1
        for i in range(last, -1, -1):
            g = self._bns[i].backward(self._relus[i].backward(g))
            g = self._convs[i].backward(
                g, need_input_grad=need_input_grad or i > 0)
        return g

    def infer_masks(self, logmel: LogMelSpectrogram) -> np.ndarray:
        """Eval-mode masks for one clip, shape (n_classes, time, mels)."""
        x = logmel.values.astype(self.dtype)[None, :, :, None]
        out = self.forward_batch(x, train=False)
        return out[0].transpose(2, 0, 1)

    def params(self) -> dict:
        out = {}
        for name, conv, bn in zip(self._names, self._convs, self._bns):
            for key, value in conv.params().items():
                out[f"{name}.{key}"] = value
            for key, value in bn.params().items():
                out[f"{name.replace('conv', 'bn')}.{key}"] = value
        for key, value in self.head.params().items():
            out[f"head.{key}"] = value
        return out

    def grads(self) -> dict:
        out = {}
        for name, conv, bn in zip(self._names, self._convs, self._bns):
            for key, value in conv.grads().items():
                out[f"{name}.{key}"] = value
            for key, value in bn.grads().items():
                out[f"{name.replace('conv', 'bn')}.{key}"] = value
        for key, value in self.head.grads().items():
            out[f"head.{key}"] = value
        return out

    def bn_state(self) -> dict:
        out = {}
        for name, bn in zip(self._names, self._bns):
            for key, value in bn.state().items():
                out[f"{name.replace('conv', 'bn')}.{key}"] = value
        return out

    def load_tensors(self, tensors: dict) -> None:
        """Overwrite parameters and BN statistics from a flat name->array dict."""
        targets = dict(self.params())
        for name, bn in zip(self._names, self._bns):
            prefix = name.replace("conv", "bn")
            targets[f"{prefix}.running_mean"] = bn.running_mean
            targets[f"{prefix}.running_var"] = bn.running_var
        for key, value in tensors.items():
            if key not in targets:
                raise ValueError(f"unknown tensor {key!r} for this architecture")
            if targets[key].shape != value.shape:
                raise ValueError(
                    f"shape mismatch for {key!r}: checkpoint "
                    f"{value.shape} vs network {targets[key].shape}"
                )
            np.copyto(targets[key], value)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params().values())


def predict_tags(masks: np.ndarray, spec: PoolingSpec) -> np.ndarray:
    """Pool each class mask (n_classes, T, F) to a presence probability."""
    masks = np.asarray(masks)
    if masks.ndim != 3:
        raise ValueError("expected masks of shape (n_classes, time, freq)")
    values, _ = pool_batch(masks.reshape(masks.shape[0], -1), spec)
    return values
