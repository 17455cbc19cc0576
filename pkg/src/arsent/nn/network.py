from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from arsent.errors import DataError, UsageError
from arsent.nn.layers import Dense, Layer
from arsent.nn.rng import SeededRng


class Network:
    """A layer stack ending in a single sigmoid unit.

    ``forward`` returns class-1 probabilities with shape (batch,).
    """

    def __init__(self, layers: list[Layer]):
        out = layers[-1]
        if not isinstance(out, Dense) or out.activation != "sigmoid":
            raise ValueError("last layer must be a sigmoid Dense unit")
        self.layers = layers
        self._ran_forward = False

    def forward(self, x: np.ndarray, mode: str = "infer", rng: SeededRng | None = None) -> np.ndarray:
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        if mode == "train" and rng is None:
            raise UsageError("train-mode forward needs a SeededRng")
        h = x
        for layer in self.layers:
            h = layer.forward(h, mode, rng)
        self._ran_forward = True
        return h[:, 0]

    def backward(self, upstream: np.ndarray, wrt: str = "output") -> None:
        """Fill every layer's gradients from dLoss/d(output) or dLoss/d(logit)."""
        if not self._ran_forward:
            raise UsageError("backward called without a preceding forward pass")
        g = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
        g = self.layers[-1].backward(g, through_activation=(wrt == "output"))
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        self._ran_forward = False

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros(0)
        parts = [self.forward(x[i:i + batch_size], "infer") for i in range(0, len(x), batch_size)]
        self._ran_forward = False
        return np.concatenate(parts)

    def parameters(self) -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        """Yield (qualified name, parameter, gradient) in a fixed order."""
        for layer in self.layers:
            for key, value in layer.params.items():
                yield f"{layer.name}.{key}", value, layer.grads[key]

    def zero_grad(self) -> None:
        for layer in self.layers:
            for g in layer.grads.values():
                g.fill(0.0)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p, _ in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = {name: p for name, p, _ in self.parameters()}
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise DataError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise DataError(f"{name}: shape {state[name].shape} does not match model {p.shape}")
            p[...] = state[name]

    def describe(self) -> list[dict]:
        return [
            {"name": layer.name, "kind": layer.kind, **layer.config(),
             "params": {k: list(v.shape) for k, v in layer.params.items()}}
            for layer in self.layers
        ]


# -- checkpoint file ----------------------------------------------------------
# Layout: magic line, 8-byte little-endian header length, UTF-8 JSON header,
# then each parameter as little-endian float64 in header order.

MAGIC = b"ARSENT-CHECKPOINT 1\n"


def save_checkpoint(path: str | Path, network: Network, meta: dict) -> None:
    tensors = []
    for name, p, _ in network.parameters():
        tensors.append({"name": name, "shape": list(p.shape)})
    header = {"meta": meta, "layers": network.describe(), "tensors": tensors}
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, p, _ in network.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (header, tensors) without building a network."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise DataError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    (n,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    header = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    tensors = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(t["shape"])
        tensors[t["name"]] = arr.astype(np.float64)
        pos += 8 * count
    if pos != len(data):
        raise DataError(f"{path}: {len(data) - pos} trailing bytes")
    return header, tensors
