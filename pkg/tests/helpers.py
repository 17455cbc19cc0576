"""Shared test utilities: central finite differences and tiny model specs."""
import numpy as np

FD_STEP = 1e-5
FD_FLOOR = 1e-6


def numeric_grad(f, arr: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar f() with respect to arr, perturbed in place."""
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        orig = arr[i]
        arr[i] = orig + step
        hi = f()
        arr[i] = orig - step
        lo = f()
        arr[i] = orig
        g[i] = (hi - lo) / (2 * step)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FD_FLOOR) -> float:
    """max |a - n| / max(|a|, |n|, floor), elementwise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def tiny_spec(**overrides):
    from arsent.training import ModelSpec

    base = dict(vocab_size=20, embed_dim=8, max_len=6, hidden=3, filters=4, kernel=3,
                dense_sizes=(5, 4, 3, 1), batch=4, epochs=1)
    base.update(overrides)
    return ModelSpec(**base)
