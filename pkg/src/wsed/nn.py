"""Minimal neural network layers with exact gradients, built on numpy.

Activations are stored channels-last as (batch, time, freq, channels)
arrays, which lets the convolution run as a handful of large GEMMs.
Parameters default to float32; every layer also works in float64 so the
gradient-check harness can run the same graph at full precision.
"""

import threading

import numpy as np
from scipy.special import expit

_PROB_CLAMP = 1e-7

_tls = threading.local()


def _scratch(tag: str, shape: tuple, dtype) -> np.ndarray:
    """Reusable per-thread work buffer for hot-loop temporaries.

    Contents are only valid within a single forward/backward call; nothing
    that must survive across calls may live here.
    """
    store = getattr(_tls, "buffers", None)
    if store is None:
        store = _tls.buffers = {}
    key = (tag, shape, np.dtype(dtype).str)
    buf = store.get(key)
    if buf is None:
        buf = store[key] = np.empty(shape, dtype=dtype)
    return buf


class Conv2d:
    """Same-padded 2-D cross-correlation plus bias, kernel 1x1 or 3x3.

    The spatial output size always equals the input size.  Implemented as
    one GEMM per kernel tap on shifted slices of the padded input; during
    training the slices are kept for the weight-gradient GEMMs.  Training
    reuses layer-owned buffers, so one instance must not run training-mode
    passes from several threads (eval-mode forward allocates fresh buffers
    and stays thread-safe).
    """

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int,
                 rng: np.random.Generator, dtype=np.float32):
        if kernel_size not in (1, 3):
            raise ValueError("kernel_size must be 1 or 3")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel_size = kernel_size
        fan_in = in_ch * kernel_size * kernel_size
        fan_out = out_ch * kernel_size * kernel_size
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        # weight[u, v, c, o]: tap (u, v), input channel c, output channel o
        self.weight = rng.uniform(
            -limit, limit, (kernel_size, kernel_size, in_ch, out_ch)
        ).astype(dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)
        self.weight_grad = None
        self.bias_grad = None
        self._cache = None
        self._pad = None
        self._cols = None

    def _train_buffers(self, b, t, f, dtype):
        shape = (b, t + 2, f + 2, self.in_ch)
        if self._pad is None or self._pad.shape != shape \
                or self._pad.dtype != dtype:
            self._pad = np.zeros(shape, dtype=dtype)
            self._cols = np.empty((9, b, t, f, self.in_ch), dtype=dtype)
        return self._pad, self._cols

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, t, f, c = x.shape
        if c != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {c}")
        k = self.kernel_size
        if k == 1:
            out = x.reshape(-1, c) @ self.weight[0, 0] + self.bias
            if train:
                self._cache = x
            return out.reshape(b, t, f, self.out_ch)
        if train:
            pad, cols = self._train_buffers(b, t, f, x.dtype)
        else:
            pad = np.zeros((b, t + 2, f + 2, c), dtype=x.dtype)
            cols = None
        pad[:, 1:t + 1, 1:f + 1, :] = x
        taps = self.weight.reshape(k * k, c, self.out_ch)
        slot = _scratch("conv_slot", (b, t, f, c), x.dtype) \
            if cols is None else None
        tmp = _scratch("conv_tmp", (b * t * f, self.out_ch), x.dtype)
        flat = np.empty((b * t * f, self.out_ch), dtype=x.dtype)
        idx = 0
        for u in range(k):
            for v in range(k):
                dst = cols[idx] if cols is not None else slot
                np.copyto(dst, pad[:, u:u + t, v:v + f, :])
                np.matmul(dst.reshape(-1, c), taps[idx],
                          out=tmp if idx else flat)
                if idx:
                    flat += tmp
                idx += 1
        flat += self.bias
        if train:
            self._cache = (b, t, f)
        return flat.reshape(b, t, f, self.out_ch)

    def backward(self, dout: np.ndarray,
                 need_input_grad: bool = True) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a training forward")
        k = self.kernel_size
        b, t, f, o = dout.shape
        d2 = dout.reshape(-1, o)
        self.bias_grad = d2.sum(axis=0)
        if k == 1:
            x = self._cache
            self.weight_grad = (x.reshape(-1, self.in_ch).T @ d2).reshape(
                1, 1, self.in_ch, self.out_ch)
            if not need_input_grad:
                return None
            return (d2 @ self.weight[0, 0].T).reshape(b, t, f, self.in_ch)
        c = self.in_ch
        cols = self._cols
        taps = self.weight.reshape(k * k, c, o)
        self.weight_grad = np.empty_like(self.weight)
        wgrad = self.weight_grad.reshape(k * k, c, o)
        dpad = np.zeros((b, t + 2, f + 2, c), dtype=dout.dtype) \
            if need_input_grad else None
        tmp = _scratch("conv_dx_tmp", (b * t * f, c), dout.dtype)
        idx = 0
        for u in range(k):
            for v in range(k):
                np.matmul(cols[idx].reshape(-1, c).T, d2, out=wgrad[idx])
                if need_input_grad:
                    np.matmul(d2, taps[idx].T, out=tmp)
                    dpad[:, u:u + t, v:v + f, :] += tmp.reshape(b, t, f, c)
                idx += 1
        if not need_input_grad:
            return None
        return dpad[:, 1:t + 1, 1:f + 1, :].copy()

    def params(self) -> dict:
        return {"weight": self.weight, "bias": self.bias}

    def grads(self) -> dict:
        return {"weight": self.weight_grad, "bias": self.bias_grad}


class BatchNorm2d:
    """Per-channel batch normalization over (batch, time, freq)."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5,
                 dtype=np.float32):
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.gamma_grad = None
        self.beta_grad = None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False,
                use_batch_stats: bool = True) -> np.ndarray:
        """Normalize per channel.

        Training with use_batch_stats=False freezes the layer to the
        running statistics (a fixed affine map) while still caching what
        backward needs; the running stats are not updated.
        """
        if x.shape[-1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[-1]}")
        if train and use_batch_stats:
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = x - mean
            xhat *= inv_std
            m = self.momentum
            self.running_mean = (m * self.running_mean
                                 + (1 - m) * mean).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var
                                + (1 - m) * var).astype(self.running_var.dtype)
            self._cache = (xhat, inv_std, False)
            out = xhat * self.gamma
            out += self.beta
            return out
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean) * inv_std
        if train:
            self._cache = (xhat, inv_std, True)
        return self.gamma * xhat + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a training forward")
        xhat, inv_std, frozen = self._cache
        self.beta_grad = dout.sum(axis=(0, 1, 2))
        self.gamma_grad = np.einsum("btfc,btfc->c", dout, xhat)
        if frozen:
            return (dout * (self.gamma * inv_std)).astype(dout.dtype,
                                                          copy=False)
        # dxhat = gamma * dout, so the batch-coupling sums reduce to the
        # per-channel beta/gamma gradients already at hand
        m = dout.size // self.channels
        dx = dout - self.beta_grad / m - xhat * (self.gamma_grad / m)
        dx *= self.gamma * inv_std
        return dx.astype(dout.dtype, copy=False)

    def params(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self) -> dict:
        return {"gamma": self.gamma_grad, "beta": self.beta_grad}

    def state(self) -> dict:
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class ReLU:
    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        out = np.maximum(x, 0.0)
        if train:
            self._cache = x > 0
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a training forward")
        return dout * self._cache


class Sigmoid:
    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        out = expit(x)
        if train:
            self._cache = out
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a training forward")
        y = self._cache
        return dout * y * (1.0 - y)


def sigmoid(x):
    return expit(x)


def relu(x):
    return np.maximum(x, 0.0)


def bce_loss(predictions: np.ndarray, targets: np.ndarray,
             positive_only: bool = False):
    """Binary cross-entropy summed over classes.

    Returns (loss, gradient w.r.t. predictions).  Predictions are clamped
    away from 0 and 1 before both the loss and the gradient.  With
    positive_only=True only the -y*log(p) term is kept (degenerate on its
    own; exposed for ablation).
    """
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.shape != targets.shape:
        raise ValueError(
            f"shape mismatch: predictions {predictions.shape} vs "
            f"targets {targets.shape}"
        )
    p = np.clip(predictions, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    y = targets.astype(p.dtype)
    if positive_only:
        loss = -np.sum(y * np.log(p))
        grad = -y / p
    else:
        loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        grad = (p - y) / (p * (1.0 - p))
    return float(loss), grad


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict) -> None:
        """Update params in place from grads; both keyed identically."""
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state_tensors(self) -> dict:
        out = {}
        for name in sorted(self.m):
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict) -> None:
        self.m = {}
        self.v = {}
        for key, value in tensors.items():
            if key.startswith("adam.m."):
                self.m[key[len("adam.m."):]] = value
            elif key.startswith("adam.v."):
                self.v[key[len("adam.v."):]] = value


def grad_check(fn, x: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between fn's analytic gradient and central differences.

    fn maps an array to (scalar value, gradient array of x's shape).  The
    caller asserts against the returned error.
    """
    _, analytic = fn(x)
    numeric = np.zeros_like(analytic, dtype=np.float64)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi, _ = fn(x)
        flat[i] = orig - eps
        lo, _ = fn(x)
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2 * eps)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
