"""Stateful layer wrappers around the kernels in ``functional``.

A layer owns its parameters, a same-shaped gradient per parameter, and the
cache from its most recent training-or-inference forward pass.
"""
from __future__ import annotations

import numpy as np

from arsent.errors import UsageError
from arsent.nn import functional as F


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def _add_param(self, key: str, value: np.ndarray) -> None:
        self.params[key] = np.asarray(value, dtype=np.float64)
        self.grads[key] = np.zeros_like(self.params[key])

    def forward(self, x, mode: str, rng) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pop_cache(self):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward called without a preceding forward pass")
        cache, self._cache = self._cache, None
        return cache

    def config(self) -> dict:
        return {}


class Embedding(Layer):
    kind = "embedding"

    def __init__(self, name, table_size: int, dim: int, rng: np.random.Generator):
        super().__init__(name)
        table = glorot_uniform(rng, (table_size, dim), table_size, dim)
        table[0] = 0.0  # padding row starts at zero
        self._add_param("table", table)

    def forward(self, x, mode, rng):
        out, self._cache = F.embedding_fwd(x, self.params["table"])
        return out

    def backward(self, grad):
        idx = self._pop_cache()
        self.grads["table"] = F.embedding_bwd(grad, idx, self.params["table"].shape)
        return None


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, name, in_dim: int, filters: int, kernel: int, rng: np.random.Generator):
        super().__init__(name)
        self._add_param(
            "kernel", glorot_uniform(rng, (kernel, in_dim, filters), kernel * in_dim, kernel * filters)
        )
        self._add_param("bias", np.zeros(filters))

    def forward(self, x, mode, rng):
        out, self._cache = F.conv1d_fwd(x, self.params["kernel"], self.params["bias"])
        return out

    def backward(self, grad):
        dx, self.grads["kernel"], self.grads["bias"] = F.conv1d_bwd(
            grad, self._pop_cache(), self.params["kernel"]
        )
        return dx


class BiLSTM(Layer):
    kind = "bilstm"

    def __init__(self, name, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__(name)
        self.hidden = hidden
        forget = np.zeros(4 * hidden)
        forget[hidden:2 * hidden] = 1.0
        for side in ("f", "b"):
            self._add_param(f"w_{side}", glorot_uniform(rng, (in_dim, 4 * hidden), in_dim, 4 * hidden))
            self._add_param(f"u_{side}", glorot_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden))
            self._add_param(f"b_{side}", forget.copy())

    def _side(self, s):
        p = self.params
        return p[f"w_{s}"], p[f"u_{s}"], p[f"b_{s}"]

    def forward(self, x, mode, rng):
        out, self._cache = F.bilstm_fwd(x, self._side("f"), self._side("b"))
        return out

    def backward(self, grad):
        dx, g_f, g_b = F.bilstm_bwd(grad, self._pop_cache(), self._side("f"), self._side("b"))
        for side, (dw, du, db) in (("f", g_f), ("b", g_b)):
            self.grads[f"w_{side}"], self.grads[f"u_{side}"], self.grads[f"b_{side}"] = dw, du, db
        return dx


class GlobalMaxPool(Layer):
    kind = "global_max_pool"

    def forward(self, x, mode, rng):
        out, self._cache = F.max_pool_fwd(x)
        return out

    def backward(self, grad):
        return F.max_pool_bwd(grad, self._pop_cache())


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, in_dim: int, out_dim: int, activation: str, rng: np.random.Generator):
        super().__init__(name)
        if activation not in F.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self._add_param("w", glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim))
        self._add_param("b", np.zeros(out_dim))

    def forward(self, x, mode, rng):
        out, self._cache = F.dense_fwd(x, self.params["w"], self.params["b"], self.activation)
        return out

    def backward(self, grad, through_activation: bool = True):
        dx, self.grads["w"], self.grads["b"] = F.dense_bwd(
            grad, self._pop_cache(), self.params["w"], through_activation
        )
        return dx

    def config(self):
        return {"activation": self.activation}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, name, rate: float):
        super().__init__(name)
        self.rate = rate

    def forward(self, x, mode, rng):
        out, mask = F.dropout_fwd(x, self.rate, mode, None if rng is None else rng.dropout)
        self._cache = (mask,)
        return out

    def backward(self, grad):
        (mask,) = self._pop_cache()
        return grad if mask is None else grad * mask

    def config(self):
        return {"rate": self.rate}


class GaussianNoise(Layer):
    kind = "gaussian_noise"

    def __init__(self, name, stddev: float):
        super().__init__(name)
        self.stddev = stddev

    def forward(self, x, mode, rng):
        self._cache = ()
        return F.gaussian_noise(x, self.stddev, mode, None if rng is None else rng.noise)

    def backward(self, grad):
        self._pop_cache()
        return grad

    def config(self):
        return {"stddev": self.stddev}
