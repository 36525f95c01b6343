"""Layers with explicit forward/backward passes on float64 numpy arrays.

Every layer caches what its backward pass needs during forward, so the
usual usage is forward -> backward -> read Param.grad.  Stochastic
behaviour (dropout) draws from the RandomStream carried by the forward
Context, which keeps whole-model forwards reproducible and makes
finite-difference checks possible with dropout active.
"""

from __future__ import annotations

import numpy as np

from ..rng import RandomStream


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class BatchTooSmallError(ValueError):
    """Batch statistics need at least two samples."""


class Param:
    """A trainable array and its gradient accumulator."""

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size


class Context:
    """Per-forward state: train/eval mode and the dropout stream."""

    def __init__(self, train: bool = False, rng: RandomStream | None = None):
        self.train = train
        self.rng = rng


class Layer:
    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list:
        """(attr_name, Param) pairs for trainable tensors."""
        return []

    def buffers(self) -> list:
        """(attr_name, ndarray) pairs for non-trainable state."""
        return []


def conv_out_extent(extent: int, kernel: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - kernel) // stride + 1


class Conv2d(Layer):
    """3x3 cross-correlation over NCHW input, default stride 2, pad 2."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 2,
                 pad: int = 2, init_rng: RandomStream | None = None):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        fan_in = in_ch * kernel * kernel
        scale = np.sqrt(2.0 / fan_in)
        if init_rng is None:
            init = np.zeros((out_ch, in_ch, kernel, kernel))
        else:
            init = init_rng.gaussian(0.0, scale, size=(out_ch, in_ch, kernel, kernel))
        self.weight = Param(init)
        self.bias = Param(np.zeros(out_ch))
        self._cols = None
        self._x_shape = None

    def _im2col(self, xp: np.ndarray, oh: int, ow: int) -> np.ndarray:
        n, c = xp.shape[0], xp.shape[1]
        k, s = self.kernel, self.stride
        cols = np.empty((n, c, k, k, oh, ow), dtype=np.float64)
        for di in range(k):
            for dj in range(k):
                cols[:, :, di, dj] = xp[:, :, di : di + s * oh : s, dj : dj + s * ow : s]
        return cols.reshape(n, c * k * k, oh * ow)

    def forward(self, x, ctx):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"conv expects (N, {self.in_ch}, H, W), got {x.shape}")
        n, _, h, w = x.shape
        oh = conv_out_extent(h, self.kernel, self.stride, self.pad)
        ow = conv_out_extent(w, self.kernel, self.stride, self.pad)
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv input {h}x{w} too small for kernel/stride/pad")
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        cols = self._im2col(xp, oh, ow)
        w2 = self.weight.value.reshape(self.out_ch, -1)
        out = np.matmul(w2, cols) + self.bias.value[:, None]
        self._cols = cols
        self._x_shape = x.shape
        return out.reshape(n, self.out_ch, oh, ow)

    def backward(self, dout):
        n, _, oh, ow = dout.shape
        d2 = dout.reshape(n, self.out_ch, oh * ow)
        self.weight.grad += np.einsum("nol,ncl->oc", d2, self._cols).reshape(self.weight.shape)
        self.bias.grad += d2.sum(axis=(0, 2))
        w2 = self.weight.value.reshape(self.out_ch, -1)
        dcols = np.matmul(w2.T, d2)
        k, s, p = self.kernel, self.stride, self.pad
        _, c, h, w = self._x_shape
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=np.float64)
        dcols = dcols.reshape(n, c, k, k, oh, ow)
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di : di + s * oh : s, dj : dj + s * ow : s] += dcols[:, :, di, dj]
        return dxp[:, :, p : p + h, p : p + w]

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int,
                 init_rng: RandomStream | None = None):
        self.in_features = in_features
        self.out_features = out_features
        scale = np.sqrt(2.0 / in_features)
        if init_rng is None:
            init = np.zeros((in_features, out_features))
        else:
            init = init_rng.gaussian(0.0, scale, size=(in_features, out_features))
        self.weight = Param(init)
        self.bias = Param(np.zeros(out_features))
        self._x = None

    def forward(self, x, ctx):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"linear expects (N, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, dout):
        self.weight.grad += self._x.T @ dout
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value.T

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


class BatchNorm(Layer):
    """Batch normalization over (N,) or (N, H, W) per feature/channel.

    Uses population variance both for normalizing and for the running
    stats; eval mode normalizes with the running stats.
    """

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(num_features))
        self.beta = Param(np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self._cache = None

    def _axes_and_shape(self, x):
        if x.ndim == 2:
            return (0,), (1, self.num_features)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.num_features, 1, 1)
        raise ShapeError(f"batchnorm expects 2-D or 4-D input, got {x.ndim}-D")

    def forward(self, x, ctx):
        if x.shape[1] != self.num_features:
            raise ShapeError(f"batchnorm over {self.num_features} features, got {x.shape}")
        axes, bshape = self._axes_and_shape(x)
        g = self.gamma.value.reshape(bshape)
        b = self.beta.value.reshape(bshape)
        if ctx.train:
            if x.shape[0] < 2:
                raise BatchTooSmallError("batchnorm needs batch size >= 2 in train mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
            self._cache = ("train", xhat, inv_std.reshape(bshape), axes, bshape)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean.reshape(bshape)) * inv_std.reshape(bshape)
            self._cache = ("eval", xhat, inv_std.reshape(bshape), axes, bshape)
        return g * xhat + b

    def backward(self, dout):
        mode, xhat, inv_std, axes, bshape = self._cache
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        dxhat = dout * self.gamma.value.reshape(bshape)
        if mode == "eval":
            return dxhat * inv_std
        m = dout.size // self.num_features
        term = dxhat - dxhat.mean(axis=axes, keepdims=True) \
            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True) / m
        return term * inv_std

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class Dropout(Layer):
    """Zero activations with probability `rate`; scale survivors by 1/(1-rate)."""

    def __init__(self, rate: float = 0.2):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, ctx):
        if not ctx.train or self.rate == 0.0:
            self._mask = None
            return x
        if ctx.rng is None:
            raise ValueError("train-mode dropout requires a RandomStream in the context")
        keep = ctx.rng.uniform(0.0, 1.0, size=x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.01):
        self.slope = slope
        self._factor = None

    def forward(self, x, ctx):
        self._factor = np.where(x > 0, 1.0, self.slope)
        return x * self._factor

    def backward(self, dout):
        return dout * self._factor


class Sigmoid(Layer):
    def __init__(self):
        self._out = None

    def forward(self, x, ctx):
        self._out = 1.0 / (1.0 + np.exp(-x))
        return self._out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, ctx):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Sequential(Layer):
    """Named layer chain; names scope the parameters of nested layers."""

    def __init__(self, layers: list):
        # layers: list of (name, Layer)
        self.layers = layers

    def forward(self, x, ctx):
        for _, layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self):
        out = []
        for name, layer in self.layers:
            for sub, p in layer.params():
                out.append((f"{name}.{sub}", p))
        return out

    def buffers(self):
        out = []
        for name, layer in self.layers:
            for sub, b in layer.buffers():
                out.append((f"{name}.{sub}", b))
        return out


def bce_loss(pred: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. the predictions.

    pred is (N,) or (N, K); labels (N,) broadcast across K outputs.  The
    mean runs over every prediction, so for multi-output models the loss
    is the mean of the per-output batch losses.  Predictions are clamped
    to [1e-7, 1 - 1e-7] before the logs.
    """
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.ndim == 1:
        y = labels
    elif pred.ndim == 2:
        if labels.shape != (pred.shape[0],):
            raise ShapeError(f"labels {labels.shape} do not match predictions {pred.shape}")
        y = labels[:, None]
    else:
        raise ShapeError(f"predictions must be 1-D or 2-D, got {pred.shape}")
    p = np.clip(pred, 1e-7, 1.0 - 1e-7)
    loss = float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())
    grad = (p - y) / (p * (1.0 - p)) / p.size
    return loss, grad
