"""Differentiable layers with hand-derived backward passes.

Every layer owns named parameters and matching gradient buffers.
``forward(x, train)`` caches whatever the backward pass needs;
``backward(grad)`` returns the gradient w.r.t. the layer input and
accumulates parameter gradients (call ``zero_grads`` between steps).
A layer instance is single-threaded during forward/backward because of
those caches; distinct instances are independent.
"""

from __future__ import annotations

import numpy as np

from .tensor import DEFAULT_DTYPE, ShapeError


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _add_param(self, name, value):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def glorot_uniform(rng, fan_in, fan_out, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Layer):
    """y = x W + b over a batch of row vectors."""

    def __init__(self, in_dim, out_dim, rng, dtype=DEFAULT_DTYPE, w_scale=None):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        if w_scale is None:
            w = glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        else:
            # small fixed scale, used for output heads so initial logits
            # are near-uniform
            w = (rng.standard_normal((in_dim, out_dim)) * w_scale).astype(dtype)
        self._add_param("weight", w)
        self._add_param("bias", np.zeros(out_dim, dtype=dtype))
        self._x = None

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Linear({self.in_dim}) got input shape {x.shape}")
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, grad):
        self.grads["weight"] += self._x.T @ grad
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"].T


class BatchNorm1d(Layer):
    """Batch normalisation over the first axis of a (batch, dim) input."""

    def __init__(self, dim, dtype=DEFAULT_DTYPE, momentum=0.1, eps=1e-5):
        super().__init__()
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self._add_param("gamma", np.ones(dim, dtype=dtype))
        self._add_param("beta", np.zeros(dim, dtype=dtype))
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)
        self._cache = None

    def forward(self, x, train=False):
        # (batch, ch, length) inputs are normalised per channel over
        # batch and length jointly
        self._orig_shape = None
        if x.ndim == 3 and x.shape[1] == self.dim:
            self._orig_shape = x.shape
            x = x.transpose(0, 2, 1).reshape(-1, self.dim)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"BatchNorm1d({self.dim}) got input shape {x.shape}")
        if train:
            if x.shape[0] < 2:
                raise ValueError("BatchNorm1d needs batch size >= 2 in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train, x.shape[0])
        out = self.params["gamma"] * xhat + self.params["beta"]
        if self._orig_shape is not None:
            b, c, length = self._orig_shape
            out = out.reshape(b, length, c).transpose(0, 2, 1)
        return out

    def backward(self, grad):
        if self._orig_shape is not None:
            grad = grad.transpose(0, 2, 1).reshape(-1, self.dim)
        xhat, inv_std, train, n = self._cache
        self.grads["gamma"] += (grad * xhat).sum(axis=0)
        self.grads["beta"] += grad.sum(axis=0)
        g = grad * self.params["gamma"]
        if not train:
            dx = g * inv_std
        else:
            # batch statistics depend on x, so the full jacobian applies
            dx = (inv_std / n) * (
                n * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0)
            )
        if self._orig_shape is not None:
            b, c, length = self._orig_shape
            dx = dx.reshape(b, length, c).transpose(0, 2, 1)
        return dx


class Dropout(Layer):
    """Inverted dropout: kept activations are scaled by 1/(1-p)."""

    def __init__(self, p, rng):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Embedding(Layer):
    """Row-lookup table for token ids; grads scatter into used rows only."""

    def __init__(self, vocab_size, dim, rng, dtype=DEFAULT_DTYPE, scale=0.05):
        super().__init__()
        self.vocab_size = vocab_size
        self.dim = dim
        self._add_param(
            "weight", rng.uniform(-scale, scale, size=(vocab_size, dim)).astype(dtype)
        )
        self._ids = None

    def forward(self, ids, train=False):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError("token id out of vocabulary range")
        self._ids = ids
        return self.params["weight"][ids]

    def backward(self, grad):
        np.add.at(self.grads["weight"], self._ids, grad)
        return None  # ids are not differentiable


class Conv1d(Layer):
    """1-d cross-correlation with same-padding over (batch, ch, length)."""

    def __init__(self, in_ch, out_ch, kernel, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        fan_in = in_ch * kernel
        self._add_param(
            "weight", glorot_uniform(rng, fan_in, out_ch, (fan_in, out_ch), dtype)
        )
        self._add_param("bias", np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeError(f"Conv1d expects (batch, {self.in_ch}, L), got {x.shape}")
        b, _, length = x.shape
        if length < 1:
            raise ShapeError("Conv1d input length must be >= 1")
        k = self.kernel
        pad_l, pad_r = (k - 1) // 2, k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad_l, pad_r)))
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)  # b,c,L,k
        cols = win.transpose(0, 2, 1, 3).reshape(b * length, self.in_ch * k)
        out = cols @ self.params["weight"] + self.params["bias"]
        self._cache = (cols, b, length, pad_l)
        return out.reshape(b, length, self.out_ch).transpose(0, 2, 1)

    def backward(self, grad):
        cols, b, length, pad_l = self._cache
        k = self.kernel
        gmat = grad.transpose(0, 2, 1).reshape(b * length, self.out_ch)
        self.grads["weight"] += cols.T @ gmat
        self.grads["bias"] += gmat.sum(axis=0)
        dcols = (gmat @ self.params["weight"].T).reshape(b, length, self.in_ch, k)
        dcols = dcols.transpose(0, 2, 1, 3)  # b,c,L,k
        dxp = np.zeros((b, self.in_ch, length + k - 1), dtype=grad.dtype)
        for j in range(k):
            dxp[:, :, j : j + length] += dcols[:, :, :, j]
        return dxp[:, :, pad_l : pad_l + length]


class MaxPool1d(Layer):
    """Non-overlapping max pooling with floor semantics (ragged tail dropped)."""

    def __init__(self, size):
        super().__init__()
        self.size = size
        self._cache = None

    def forward(self, x, train=False):
        b, c, length = x.shape
        n = length // self.size
        if n < 1:
            raise ShapeError(f"pool size {self.size} larger than input length {length}")
        win = x[:, :, : n * self.size].reshape(b, c, n, self.size)
        arg = win.argmax(axis=3)  # first index on ties
        self._cache = (arg, x.shape)
        return np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

    def backward(self, grad):
        arg, shape = self._cache
        b, c, length = shape
        n = grad.shape[2]
        dwin = np.zeros((b, c, n, self.size), dtype=grad.dtype)
        np.put_along_axis(dwin, arg[..., None], grad[..., None], axis=3)
        dx = np.zeros(shape, dtype=grad.dtype)
        dx[:, :, : n * self.size] = dwin.reshape(b, c, n * self.size)
        return dx


class AdaptiveMaxPool1d(Layer):
    """Max pooling to a fixed output length over near-equal windows."""

    def __init__(self, out_len):
        super().__init__()
        self.out_len = out_len
        self._cache = None

    def forward(self, x, train=False):
        b, c, length = x.shape
        if self.out_len > length:
            raise ShapeError(f"adaptive pool out_len {self.out_len} > length {length}")
        bounds = [(i * length // self.out_len, (i + 1) * length // self.out_len)
                  for i in range(self.out_len)]
        out = np.empty((b, c, self.out_len), dtype=x.dtype)
        args = np.empty((b, c, self.out_len), dtype=np.int64)
        for i, (lo, hi) in enumerate(bounds):
            seg = x[:, :, lo:hi]
            a = seg.argmax(axis=2)
            args[:, :, i] = a + lo
            out[:, :, i] = np.take_along_axis(seg, a[..., None], axis=2)[..., 0]
        self._cache = (args, x.shape)
        return out

    def backward(self, grad):
        args, shape = self._cache
        dx = np.zeros(shape, dtype=grad.dtype)
        np.put_along_axis(dx, args, grad, axis=2)
        return dx


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Sequential(Layer):
    """Ordered layer stack; parameter names are '<idx>.<name>'."""

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Sequential):
                for name, p in layer.named_params().items():
                    out[f"{i}.{name}"] = p
            else:
                for name, p in layer.params.items():
                    out[f"{i}.{name}"] = p
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Sequential):
                for name, g in layer.named_grads().items():
                    out[f"{i}.{name}"] = g
            else:
                for name, g in layer.grads.items():
                    out[f"{i}.{name}"] = g
        return out
