"""Forward/backward kernels for every layer type.

All kernels work on float64 numpy arrays in batch-major layout
(batch, time, features). The public ``*_forward`` helpers also accept a
single unbatched sequence and return an unbatched result. Each
``*_fwd`` returns ``(output, cache)`` and the matching ``*_bwd`` consumes
the cache.
"""
from __future__ import annotations

import numpy as np

from arsent.errors import InputError, SequenceTooShortError
from arsent.text import EncodedSequence

ACTIVATIONS = ("relu", "sigmoid", "none")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- embedding ---------------------------------------------------------------

def embedding_fwd(idx: np.ndarray, table: np.ndarray):
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise InputError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"min={idx.min()}, max={idx.max()}"
        )
    return table[idx], idx


def embedding_bwd(grad: np.ndarray, cache, table_shape) -> np.ndarray:
    idx = cache
    d_table = np.zeros(table_shape)
    np.add.at(d_table, idx.reshape(-1), grad.reshape(-1, table_shape[1]))
    return d_table


def embedding_forward(seq, table: np.ndarray) -> np.ndarray:
    if isinstance(seq, EncodedSequence):
        seq = seq.indices
    out, _ = embedding_fwd(np.asarray(seq, dtype=np.int64), table)
    return out


# -- conv1d (valid padding, fused ReLU) -------------------------------------

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    t_out = x.shape[1] - k + 1
    return np.concatenate([x[:, j:j + t_out, :] for j in range(k)], axis=2)


def conv1d_fwd(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    k, d, f = kernel.shape
    if x.shape[1] < k:
        raise SequenceTooShortError(f"sequence length {x.shape[1]} < kernel size {k}")
    if x.shape[2] != d:
        raise ValueError(f"conv1d expects {d} input channels, got {x.shape[2]}")
    cols = _im2col(x, k)
    pre = cols @ kernel.reshape(k * d, f) + bias
    out = np.maximum(pre, 0.0)
    return out, (cols, pre > 0, x.shape)


def conv1d_bwd(grad: np.ndarray, cache, kernel: np.ndarray):
    cols, active, x_shape = cache
    k, d, f = kernel.shape
    g = grad * active
    g2 = g.reshape(-1, f)
    d_kernel = (cols.reshape(-1, k * d).T @ g2).reshape(k, d, f)
    d_bias = g2.sum(axis=0)
    d_cols = g @ kernel.reshape(k * d, f).T
    dx = np.zeros(x_shape)
    t_out = d_cols.shape[1]
    for j in range(k):
        dx[:, j:j + t_out, :] += d_cols[:, :, j * d:(j + 1) * d]
    return dx, d_kernel, d_bias


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    single = x.ndim == 2
    out, _ = conv1d_fwd(x[None] if single else x, kernel, bias)
    return out[0] if single else out


# -- LSTM ---------------------------------------------------------------------
# Gate rows are laid out [input | forget | output | candidate] so the three
# sigmoid gates form one contiguous block. The scan runs D directions in
# lock-step on feature-major buffers of shape (T, D, features, B): every gate
# slice is then a contiguous block, which matters far more than flop count.

def _scan_fwd(xw: np.ndarray, u: np.ndarray):
    """xw: (T, D, 4H, B) input projections incl. bias; u: (D, H, 4H)."""
    steps, dirs, h4, n = xw.shape
    hid = h4 // 4
    u_t = np.ascontiguousarray(u.transpose(0, 2, 1))
    hs = np.zeros((steps + 1, dirs, hid, n))
    cs = np.zeros((steps + 1, dirs, hid, n))
    gates = np.empty((steps, dirs, h4, n))
    tcs = np.empty((steps, dirs, hid, n))
    for t in range(steps):
        a = gates[t]
        np.matmul(u_t, hs[t], out=a)
        a += xw[t]
        sg = a[:, :3 * hid]
        sg *= 0.5
        np.tanh(sg, out=sg)
        sg *= 0.5
        sg += 0.5
        np.tanh(a[:, 3 * hid:], out=a[:, 3 * hid:])
        c = cs[t + 1]
        np.multiply(a[:, hid:2 * hid], cs[t], out=c)
        c += a[:, :hid] * a[:, 3 * hid:]
        np.tanh(c, out=tcs[t])
        np.multiply(a[:, 2 * hid:3 * hid], tcs[t], out=hs[t + 1])
    return hs, cs, gates, tcs


def _scan_bwd(grad: np.ndarray, hs, cs, gates, tcs, u: np.ndarray) -> np.ndarray:
    """grad: (T, D, H, B) dLoss/dh_t. Returns dLoss/d(gate pre-activations)."""
    hid = u.shape[1]
    i, f = gates[:, :, :hid], gates[:, :, hid:2 * hid]
    o, g = gates[:, :, 2 * hid:3 * hid], gates[:, :, 3 * hid:]
    # factors that do not depend on the recurrence, computed in bulk
    k_c = o * (1.0 - tcs * tcs)
    k_i = g * i * (1.0 - i)
    k_f = cs[:-1] * f * (1.0 - f)
    k_o = tcs * o * (1.0 - o)
    k_g = i * (1.0 - g * g)
    f = np.ascontiguousarray(f)
    dz = np.empty_like(gates)
    dh = np.zeros(grad.shape[1:])
    dc = np.zeros(grad.shape[1:])
    for t in range(grad.shape[0] - 1, -1, -1):
        dh += grad[t]
        dc *= f[t + 1] if t + 1 < grad.shape[0] else 0.0
        dc += dh * k_c[t]
        z = dz[t]
        np.multiply(dc, k_i[t], out=z[:, :hid])
        np.multiply(dc, k_f[t], out=z[:, hid:2 * hid])
        np.multiply(dh, k_o[t], out=z[:, 2 * hid:3 * hid])
        np.multiply(dc, k_g[t], out=z[:, 3 * hid:])
        np.matmul(u, z, out=dh)
    return dz


def _recurrent_grads(hs: np.ndarray, dz: np.ndarray):
    """du and db per direction, in scan order. hs: (T+1, D, H, B), dz: (T, D, 4H, B)."""
    steps, dirs, h4, n = dz.shape
    hid = hs.shape[2]
    dz_r = dz.transpose(1, 2, 0, 3).reshape(dirs, h4, steps * n)
    h_r = hs[:-1].transpose(1, 2, 0, 3).reshape(dirs, hid, steps * n)
    return h_r @ dz_r.transpose(0, 2, 1), dz_r.sum(axis=2)


def _input_grads(x: np.ndarray, dz_aligned: np.ndarray, w_cat: np.ndarray):
    """Input-path gradients for all directions at once.

    x: (B, T, d); dz_aligned: (T, D*4H, B) with every direction re-ordered to
    input time; w_cat: (d, D*4H). Returns dx (B, T, d) and dw_cat (d, D*4H).
    """
    n, steps, d = x.shape
    x_r = x.transpose(2, 1, 0).reshape(d, steps * n)
    dz_r = dz_aligned.transpose(1, 0, 2).reshape(-1, steps * n)
    dw_cat = x_r @ dz_r.T
    dx = (w_cat @ dz_r).reshape(d, steps, n).transpose(2, 1, 0)
    return dx, dw_cat


def _projections(x: np.ndarray, w_cat: np.ndarray, b_cat: np.ndarray, dirs: int) -> np.ndarray:
    """(B, T, d) -> (T, D, 4H, B); direction 1 runs right to left."""
    n, steps, d = x.shape
    xw = (x.transpose(1, 0, 2).reshape(-1, d) @ w_cat + b_cat).reshape(steps, n, dirs, -1)
    out = np.empty((steps, dirs, xw.shape[3], n))
    out[:, 0] = xw[:, :, 0].transpose(0, 2, 1)
    if dirs == 2:
        out[:, 1] = xw[::-1, :, 1].transpose(0, 2, 1)
    return out


def lstm_fwd(x: np.ndarray, w: np.ndarray, u: np.ndarray, b: np.ndarray):
    """One direction, left to right. x: (B, T, d) -> hidden states (B, T, H)."""
    hs, cs, gates, tcs = _scan_fwd(_projections(x, w, b, 1), u[None])
    return hs[1:, 0].transpose(2, 0, 1), (x, hs, cs, gates, tcs)


def lstm_bwd(grad: np.ndarray, cache, w: np.ndarray, u: np.ndarray):
    x, hs, cs, gates, tcs = cache
    g_tm = np.ascontiguousarray(grad.transpose(1, 2, 0))[:, None]
    dz = _scan_bwd(g_tm, hs, cs, gates, tcs, u[None])
    du, db = _recurrent_grads(hs, dz)
    dx, dw = _input_grads(x, dz[:, 0], w)
    return dx, dw, du[0], db[0]


def bilstm_fwd(x: np.ndarray, fwd_params, bwd_params):
    """Concatenate a left-to-right and a right-to-left LSTM, forward half first."""
    (wf, uf, bf), (wb, ub, bb) = fwd_params, bwd_params
    xw = _projections(x, np.concatenate([wf, wb], axis=1), np.concatenate([bf, bb]), 2)
    hs, cs, gates, tcs = _scan_fwd(xw, np.stack([uf, ub]))
    out = np.concatenate([hs[1:, 0], hs[:0:-1, 1]], axis=1).transpose(2, 0, 1)
    return out, (x, hs, cs, gates, tcs)


def bilstm_bwd(grad: np.ndarray, cache, fwd_params, bwd_params):
    x, hs, cs, gates, tcs = cache
    hid = fwd_params[1].shape[0]
    g_t = grad.transpose(1, 2, 0)
    g_tm = np.empty((g_t.shape[0], 2, hid, g_t.shape[2]))
    g_tm[:, 0] = g_t[:, :hid]
    g_tm[:, 1] = g_t[::-1, hid:]
    dz = _scan_bwd(g_tm, hs, cs, gates, tcs, np.stack([fwd_params[1], bwd_params[1]]))
    du, db = _recurrent_grads(hs, dz)
    dz_aligned = np.concatenate([dz[:, 0], dz[::-1, 1]], axis=1)
    w_cat = np.concatenate([fwd_params[0], bwd_params[0]], axis=1)
    dx, dw_cat = _input_grads(x, dz_aligned, w_cat)
    h4 = 4 * hid
    return dx, (dw_cat[:, :h4], du[0], db[0]), (dw_cat[:, h4:], du[1], db[1])


def bilstm_forward(x: np.ndarray, params: dict) -> np.ndarray:
    """params holds w_f, u_f, b_f, w_b, u_b, b_b."""
    single = x.ndim == 2
    xb = x[None] if single else x
    out, _ = bilstm_fwd(
        xb,
        (params["w_f"], params["u_f"], params["b_f"]),
        (params["w_b"], params["u_b"], params["b_b"]),
    )
    return out[0] if single else out


# -- global max pool ----------------------------------------------------------

def max_pool_fwd(x: np.ndarray):
    if x.shape[1] < 1:
        raise InputError("global max pool needs at least one timestep")
    arg = np.argmax(x, axis=1)  # first maximum on ties
    out = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0]
    return out, (arg, x.shape)


def max_pool_bwd(grad: np.ndarray, cache) -> np.ndarray:
    arg, shape = cache
    dx = np.zeros(shape)
    np.put_along_axis(dx, arg[:, None, :], grad[:, None, :], axis=1)
    return dx


def global_max_pool(x: np.ndarray) -> np.ndarray:
    single = x.ndim == 2
    out, _ = max_pool_fwd(x[None] if single else x)
    return out[0] if single else out


# -- dense --------------------------------------------------------------------

def _activate(pre: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(pre, 0.0)
    if act == "sigmoid":
        return sigmoid(pre)
    if act == "none":
        return pre
    raise ValueError(f"unknown activation {act!r}")


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, act: str):
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    pre = x @ w + b
    out = _activate(pre, act)
    return out, (x, pre, out, act)


def dense_bwd(grad: np.ndarray, cache, w: np.ndarray, through_activation: bool = True):
    x, pre, out, act = cache
    if through_activation:
        if act == "relu":
            grad = grad * (pre > 0)
        elif act == "sigmoid":
            grad = grad * out * (1.0 - out)
    dw = x.T @ grad
    db = grad.sum(axis=0)
    return grad @ w.T, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, act: str = "none") -> np.ndarray:
    single = x.ndim == 1
    out, _ = dense_fwd(x[None] if single else x, w, b, act)
    return out[0] if single else out


# -- stochastic regularizers --------------------------------------------------

def dropout_fwd(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None) -> np.ndarray:
    return dropout_fwd(x, rate, mode, rng)[0]


def gaussian_noise(x: np.ndarray, stddev: float, mode: str, rng: np.random.Generator | None):
    if stddev < 0:
        raise ValueError("noise stddev must be non-negative")
    if mode == "infer" or stddev == 0.0:
        return x
    return x + rng.normal(0.0, stddev, size=x.shape)
