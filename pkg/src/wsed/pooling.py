"""Global poolings that reduce one segmentation mask to a clip-level score.

Three classification mappings are provided: global max pooling (gmp),
global average pooling (gap) and global weighted rank pooling (gwrp).
GWRP sorts the mask values in descending order and weights rank j by
r**(j-1) / Z(r) with Z(r) the sum of the weights; r=0 reduces to gmp and
r=1 to gap.
"""

from dataclasses import dataclass

import numpy as np

POOLING_KINDS = ("gmp", "gap", "gwrp")

_weight_cache: dict = {}


@dataclass
class PoolingSpec:
    kind: str
    r: float = 1.0

    def __post_init__(self):
        if self.kind not in POOLING_KINDS:
            raise ValueError(f"unknown pooling kind {self.kind!r}")
        if self.kind == "gwrp" and not 0.0 <= self.r <= 1.0:
            raise ValueError(f"gwrp decay r={self.r} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r}

    @classmethod
    def from_dict(cls, d: dict) -> "PoolingSpec":
        return cls(**d)


def _rank_weights(num_units: int, r: float) -> np.ndarray:
    """Normalized descending rank weights r**(j-1) / Z(r); cached, do not mutate."""
    key = (num_units, float(r))
    cached = _weight_cache.get(key)
    if cached is not None:
        return cached
    if r == 0.0:
        weights = np.zeros(num_units)
        weights[0] = 1.0
    else:
        weights = np.power(r, np.arange(num_units, dtype=np.float64))
        weights /= weights.sum()
    _weight_cache[key] = weights
    return weights


def pool_batch(flat: np.ndarray, spec: PoolingSpec):
    """Pool each row of a (n, units) matrix.

    Returns (values, grads): the pooled value per row and the gradient of
    each value with respect to that row's entries.
    """
    flat = np.asarray(flat)
    if flat.ndim != 2 or flat.shape[1] == 0:
        raise ValueError("expected a non-empty (n, units) matrix")
    n, m = flat.shape
    grads = np.zeros_like(flat)
    if spec.kind == "gap":
        values = flat.mean(axis=1)
        grads[:] = 1.0 / m
    elif spec.kind == "gmp":
        idx = np.argmax(flat, axis=1)  # first max in row-major order
        values = flat[np.arange(n), idx]
        grads[np.arange(n), idx] = 1.0
    else:
        weights = _rank_weights(m, spec.r).astype(flat.dtype)
        order = np.argsort(-flat, axis=1, kind="stable")
        values = np.take_along_axis(flat, order, axis=1) @ weights
        np.put_along_axis(grads, order, weights[None, :], axis=1)
    return values, grads


def pool(mask: np.ndarray, spec: PoolingSpec) -> float:
    """Pooled value of a single mask."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("cannot pool an empty mask")
    values, _ = pool_batch(mask.reshape(1, -1), spec)
    return float(values[0])


def pool_grad(mask: np.ndarray, spec: PoolingSpec):
    """Pooled value and its gradient with respect to the mask."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("cannot pool an empty mask")
    values, grads = pool_batch(mask.reshape(1, -1), spec)
    return float(values[0]), grads.reshape(mask.shape)


def gmp(mask: np.ndarray) -> float:
    return pool(mask, PoolingSpec("gmp"))


def gap(mask: np.ndarray) -> float:
    return pool(mask, PoolingSpec("gap"))


def gwrp(mask: np.ndarray, r: float) -> float:
    return pool(mask, PoolingSpec("gwrp", r))
