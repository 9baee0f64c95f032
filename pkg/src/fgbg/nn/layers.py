"""Differentiable layers over plain numpy arrays.

Activations are NCHW (or NxD after flattening). Forward in eval mode is
pure and allocation-only; train mode returns a cache consumed exactly once
by the matching backward call. All math stays in the layer's dtype;
gradient-check tests instantiate float64 layers.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError

__all__ = ["Conv2d", "ReLU", "MaxPool2d", "FullyConnected", "Dropout", "softmax", "softmax_xent"]


def _corr2d(x: np.ndarray, w: np.ndarray, bias, stride: int, pad: int):
    """Cross-correlation of NCHW input with (Co,Ci,kh,kw) filters.

    Columns are laid out (N, Ci*kh*kw, Ho*Wo) so both the forward product
    and the weight gradient are plain batched matmuls with no transposed
    copies. Returns (output, columns).
    """
    n, c, h, width = x.shape
    co, ci, kh, kw = w.shape
    if c != ci:
        raise ShapeMismatchError(f"conv expects {ci} input channels, got {c}")
    if h + 2 * pad < kh or width + 2 * pad < kw:
        raise ShapeMismatchError(
            f"conv kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{width + 2 * pad}"
        )
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (width + 2 * pad - kw) // stride + 1
    col = np.empty((n, ci, kh, kw, ho, wo), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            col[:, :, u, v] = x[
                :, :, u : u + (ho - 1) * stride + 1 : stride,
                v : v + (wo - 1) * stride + 1 : stride,
            ]
    col2 = col.reshape(n, ci * kh * kw, ho * wo)
    out = np.matmul(w.reshape(co, -1), col2)
    if bias is not None:
        out += bias[:, None]
    return out.reshape(n, co, ho, wo), col2


class Conv2d:
    """2-D convolution (cross-correlation) with bias."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.dtype = np.dtype(dtype)
        self.params = {
            "w": np.zeros((out_channels, in_channels, kernel, kernel), dtype=dtype),
            "b": np.zeros(out_channels, dtype=dtype),
        }

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel * self.kernel
        scale = 1.0 / np.sqrt(fan_in)
        self.params["w"][...] = rng.normal(0.0, scale, self.params["w"].shape)
        self.params["b"][...] = 0.0

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeMismatchError(
                f"conv expects {self.in_channels} channels, layer input has {c}"
            )
        ho = (h + 2 * self.pad - self.kernel) // self.stride + 1
        wo = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeMismatchError(f"conv output collapses for input {in_shape}")
        return (self.out_channels, ho, wo)

    def forward(self, x, train=False, rng=None):
        y, col = _corr2d(x, self.params["w"], self.params["b"], self.stride, self.pad)
        cache = {"col": col, "x_shape": x.shape} if train else None
        return y, cache

    def backward(self, dy, cache, need_dx=True):
        n, _, h, w = cache["x_shape"]
        co, ci, kh, kw = self.params["w"].shape
        s, p = self.stride, self.pad
        _, _, ho, wo = dy.shape

        dy2 = dy.reshape(n, co, ho * wo)
        dw = np.matmul(dy2, cache["col"].transpose(0, 2, 1)).sum(axis=0).reshape(
            co, ci, kh, kw
        )
        db = dy2.sum(axis=(0, 2))
        if not need_dx:
            return None, {"w": dw, "b": db}

        # Input gradient as a stride-1 correlation of the dilated output
        # gradient with the spatially flipped, channel-transposed kernel.
        if s > 1:
            dil = np.zeros((n, co, (ho - 1) * s + 1, (wo - 1) * s + 1), dtype=dy.dtype)
            dil[:, :, ::s, ::s] = dy
        else:
            dil = dy
        slack_h = (h + 2 * p) - ((ho - 1) * s + kh)
        slack_w = (w + 2 * p) - ((wo - 1) * s + kw)
        g = np.pad(
            dil,
            ((0, 0), (0, 0), (kh - 1, kh - 1 + slack_h), (kw - 1, kw - 1 + slack_w)),
        )
        w_flip = self.params["w"][:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx_pad, _ = _corr2d(g, np.ascontiguousarray(w_flip), None, 1, 0)
        dx = dx_pad[:, :, p : p + h, p : p + w]
        return np.ascontiguousarray(dx), {"w": dw, "b": db}


class ReLU:
    kind = "relu"
    params: dict = {}

    def init_params(self, rng):
        pass

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None):
        y = np.maximum(x, 0)
        cache = {"mask": x > 0} if train else None
        return y, cache

    def backward(self, dy, cache):
        return dy * cache["mask"], {}


class MaxPool2d:
    """Non-overlapping max pooling (kernel == stride)."""

    kind = "maxpool"
    params: dict = {}

    def __init__(self, kernel=2):
        self.kernel = kernel

    def init_params(self, rng):
        pass

    def out_shape(self, in_shape):
        c, h, w = in_shape
        k = self.kernel
        if h % k or w % k:
            raise ShapeMismatchError(
                f"maxpool kernel {k} does not tile input {h}x{w}"
            )
        return (c, h // k, w // k)

    def _windows(self, x):
        n, c, h, w = x.shape
        k = self.kernel
        v = x.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
        return v.reshape(n, c, h // k, w // k, k * k)

    def forward(self, x, train=False, rng=None):
        if x.shape[2] % self.kernel or x.shape[3] % self.kernel:
            raise ShapeMismatchError(
                f"maxpool kernel {self.kernel} does not tile input {x.shape[2]}x{x.shape[3]}"
            )
        v = self._windows(x)
        idx = v.argmax(axis=-1)
        y = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
        cache = {"idx": idx, "x_shape": x.shape} if train else None
        return np.ascontiguousarray(y), cache

    def backward(self, dy, cache):
        n, c, h, w = cache["x_shape"]
        k = self.kernel
        flat = np.zeros((n, c, h // k, w // k, k * k), dtype=dy.dtype)
        np.put_along_axis(flat, cache["idx"][..., None], dy[..., None], axis=-1)
        dx = flat.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5)
        return np.ascontiguousarray(dx.reshape(n, c, h, w)), {}


class FullyConnected:
    """Affine layer; flattens any trailing input dimensions."""

    kind = "fc"

    def __init__(self, in_features, out_features, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.dtype = np.dtype(dtype)
        self.params = {
            "w": np.zeros((in_features, out_features), dtype=dtype),
            "b": np.zeros(out_features, dtype=dtype),
        }

    def init_params(self, rng):
        scale = 1.0 / np.sqrt(self.in_features)
        self.params["w"][...] = rng.normal(0.0, scale, self.params["w"].shape)
        self.params["b"][...] = 0.0

    def out_shape(self, in_shape):
        flat = int(np.prod(in_shape))
        if flat != self.in_features:
            raise ShapeMismatchError(
                f"fc expects {self.in_features} features, layer input has {flat}"
            )
        return (self.out_features,)

    def forward(self, x, train=False, rng=None):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.in_features:
            raise ShapeMismatchError(
                f"fc expects {self.in_features} features, batch has {x2.shape[1]}"
            )
        y = x2 @ self.params["w"] + self.params["b"]
        cache = {"x2": x2, "x_shape": x.shape} if train else None
        return y, cache

    def backward(self, dy, cache):
        dw = cache["x2"].T @ dy
        db = dy.sum(axis=0)
        dx = (dy @ self.params["w"].T).reshape(cache["x_shape"])
        return dx, {"w": dw, "b": db}


class Dropout:
    """Inverted dropout: survivors are rescaled at train time, eval is identity."""

    kind = "dropout"
    params: dict = {}

    def __init__(self, drop_prob):
        if not 0.0 < drop_prob < 1.0:
            raise ShapeMismatchError(f"dropout probability must be in (0,1), got {drop_prob}")
        self.drop_prob = float(drop_prob)

    def init_params(self, rng):
        pass

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None):
        if not train:
            return x, None
        if rng is None:
            raise ShapeMismatchError("dropout in train mode needs the iteration rng")
        keep = 1.0 - self.drop_prob
        mask = (rng.random(x.shape) >= self.drop_prob).astype(x.dtype)
        scale = x.dtype.type(1.0 / keep)
        return x * mask * scale, {"mask": mask, "scale": scale}

    def backward(self, dy, cache):
        return dy * cache["mask"] * cache["scale"], {}


def dropout_apply(x, keep_prob, train, rng=None):
    """Functional dropout keyed by keep probability (keep = 1 - drop)."""
    if not train:
        return x
    layer = Dropout(1.0 - keep_prob)
    y, _ = layer.forward(x, train=True, rng=rng)
    return y


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stable."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(scores: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the scores."""
    n, c = scores.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeMismatchError(
            f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]"
        )
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(n), labels] - log_z
    loss = float(-log_p.mean())
    probs = softmax(scores)
    probs[np.arange(n), labels] -= 1.0
    return loss, (probs / n).astype(scores.dtype)
