"""LSTM cell and bidirectional LSTM with full backpropagation through time.

Sequences are processed one at a time as (T, features) arrays; batching
across sequences happens by gradient accumulation in the callers.
"""

from __future__ import annotations

import numpy as np

from .layers import Layer
from .tensor import DEFAULT_DTYPE


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class LstmCell(Layer):
    """Single-direction LSTM over one sequence; gate order i, f, g, o."""

    def __init__(self, input_dim, hidden, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        bound = 1.0 / np.sqrt(hidden)
        self._add_param("w_x", rng.uniform(-bound, bound, (input_dim, 4 * hidden)).astype(dtype))
        self._add_param("w_h", rng.uniform(-bound, bound, (hidden, 4 * hidden)).astype(dtype))
        self._add_param("bias", np.zeros(4 * hidden, dtype=dtype))
        self._cache = None

    def forward(self, x, train=False):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"LstmCell expects (T, {self.input_dim}), got {x.shape}")
        t_len = x.shape[0]
        if t_len == 0:
            raise ValueError("zero-length sequence")
        h_dim = self.hidden
        pre = x @ self.params["w_x"] + self.params["bias"]
        hs = np.zeros((t_len, h_dim), dtype=x.dtype)
        steps = []
        h = np.zeros(h_dim, dtype=x.dtype)
        c = np.zeros(h_dim, dtype=x.dtype)
        for t in range(t_len):
            a = pre[t] + h @ self.params["w_h"]
            i = _sigmoid(a[:h_dim])
            f = _sigmoid(a[h_dim : 2 * h_dim])
            g = np.tanh(a[2 * h_dim : 3 * h_dim])
            o = _sigmoid(a[3 * h_dim :])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[t] = h
            steps.append((i, f, g, o, c_prev, h_prev, tc))
        self._cache = (x, steps)
        return hs

    def backward(self, dh_seq):
        x, steps = self._cache
        t_len, h_dim = dh_seq.shape
        dx = np.zeros_like(x)
        dh_next = np.zeros(h_dim, dtype=x.dtype)
        dc_next = np.zeros(h_dim, dtype=x.dtype)
        w_x = self.params["w_x"]
        w_h = self.params["w_h"]
        for t in range(t_len - 1, -1, -1):
            i, f, g, o, c_prev, h_prev, tc = steps[t]
            dh = dh_seq[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ])
            self.grads["w_x"] += np.outer(x[t], da)
            self.grads["w_h"] += np.outer(h_prev, da)
            self.grads["bias"] += da
            dx[t] = w_x @ da
            dh_next = w_h @ da
            dc_next = dc * f
        return dx


class BiLstm(Layer):
    """Forward and reverse LSTM; output is the per-step concatenation."""

    def __init__(self, input_dim, hidden, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.hidden = hidden
        self.fwd = LstmCell(input_dim, hidden, rng, dtype)
        self.bwd = LstmCell(input_dim, hidden, rng, dtype)
        for name, p in self.fwd.params.items():
            self.params[f"fwd.{name}"] = p
            self.grads[f"fwd.{name}"] = self.fwd.grads[name]
        for name, p in self.bwd.params.items():
            self.params[f"bwd.{name}"] = p
            self.grads[f"bwd.{name}"] = self.bwd.grads[name]

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()

    def forward(self, x, train=False):
        h_f = self.fwd.forward(x, train=train)
        h_b = self.bwd.forward(x[::-1], train=train)[::-1]
        return np.concatenate([h_f, h_b], axis=1)

    def backward(self, grad):
        h_dim = self.hidden
        dx_f = self.fwd.backward(grad[:, :h_dim])
        dx_b = self.bwd.backward(grad[::-1, h_dim:])[::-1]
        return dx_f + dx_b
