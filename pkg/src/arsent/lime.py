"""Local surrogate explanations for a single text prediction.

The black box is only ever called as ``f(list_of_texts) -> class-1
probabilities``. A review is represented by the presence of each of its
distinct tokens; perturbations delete every occurrence of the masked tokens,
are weighted by an exponential kernel on cosine distance to the original,
and a weighted ridge regression with an unpenalized intercept is fit to the
black-box outputs. The ridge penalty plus a hard top-k feature budget play
the role of the complexity term.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from arsent.errors import CannotExplainError, ConfigError, RankDeficiencyError
from arsent.nn.rng import stream
from arsent.text import preprocess

BlackBox = Callable[[Sequence[str]], np.ndarray]


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 1000
    kernel_width: float = 25.0
    ridge_penalty: float = 1.0
    top_k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.kernel_width <= 0:
            raise ConfigError("kernel_width must be > 0")
        if self.ridge_penalty < 0:
            raise ConfigError("ridge_penalty must be >= 0")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")


@dataclass(frozen=True)
class InterpretableInstance:
    tokens: tuple[str, ...]
    distinct_tokens: tuple[str, ...]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "InterpretableInstance":
        return cls(tuple(tokens), tuple(dict.fromkeys(tokens)))

    @classmethod
    def from_text(cls, text: str) -> "InterpretableInstance":
        return cls.from_tokens(preprocess(text))

    def __len__(self) -> int:
        return len(self.distinct_tokens)

    def reconstruct(self, presence: Sequence[int]) -> str:
        keep = {tok for tok, z in zip(self.distinct_tokens, presence) if z}
        return " ".join(t for t in self.tokens if t in keep)


@dataclass(frozen=True)
class Explanation:
    token_weights: tuple[tuple[str, float], ...]
    intercept: float
    local_fidelity: float
    predicted_probabilities: tuple[float, float]
    num_features: int = 0
    review_id: str | None = None
    config: LimeConfig = field(default_factory=LimeConfig)

    def weight_of(self, token: str) -> float:
        return dict(self.token_weights).get(token, 0.0)

    def to_record(self) -> dict:
        return {
            "review_id": self.review_id,
            "predicted_probabilities": list(self.predicted_probabilities),
            "token_weights": [[t, w] for t, w in self.token_weights],
            "intercept": self.intercept,
            "local_fidelity": self.local_fidelity,
            "num_features": self.num_features,
            "config": asdict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Explanation":
        d = json.loads(text)
        return cls(
            token_weights=tuple((t, float(w)) for t, w in d["token_weights"]),
            intercept=d["intercept"],
            local_fidelity=d["local_fidelity"],
            predicted_probabilities=tuple(d["predicted_probabilities"]),
            num_features=d["num_features"],
            review_id=d["review_id"],
            config=LimeConfig(**d["config"]),
        )


def perturb(instance: InterpretableInstance, config: LimeConfig,
            rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
    """Sample presence vectors; row 0 is always the unmasked review.

    Each further row masks k distinct tokens, k uniform on {0, ..., n-1}.
    """
    n = len(instance)
    if n == 0:
        raise CannotExplainError("review has no tokens after preprocessing")
    z = np.ones((config.num_samples, n), dtype=np.int8)
    for row in z[1:]:
        k = int(rng.integers(0, n))
        row[rng.choice(n, size=k, replace=False)] = 0
    return z, [instance.reconstruct(row) for row in z]


def cosine_distance(original: np.ndarray, perturbed: np.ndarray) -> np.ndarray:
    """Row-wise cosine distance; an all-zero row is at distance 1."""
    original = np.asarray(original, dtype=np.float64)
    perturbed = np.atleast_2d(np.asarray(perturbed, dtype=np.float64))
    norms = np.linalg.norm(perturbed, axis=1) * np.linalg.norm(original)
    dots = perturbed @ original
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
    return 1.0 - cos


def proximity(original, perturbed, kernel_width: float):
    """exp(-D^2 / width^2) with D the cosine distance. Scalar in, scalar out."""
    d = cosine_distance(original, perturbed)
    w = np.exp(-(d ** 2) / kernel_width ** 2)
    return float(w[0]) if np.ndim(perturbed) == 1 else w


def weighted_ridge(x: np.ndarray, y: np.ndarray, w: np.ndarray, penalty: float) -> tuple[np.ndarray, float]:
    """Minimize sum_i w_i (y_i - b - x_i.beta)^2 + penalty * |beta|^2 (b unpenalized).

    Centering on the weighted means eliminates the intercept, leaving the
    normal equations (Xc' W Xc + penalty I) beta = Xc' W yc.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    sw = w.sum()
    x_mean = w @ x / sw
    y_mean = w @ y / sw
    xc = x - x_mean
    gram = xc.T @ (w[:, None] * xc)
    rhs = xc.T @ (w * (y - y_mean))
    p = x.shape[1]
    if penalty == 0 and p and np.linalg.matrix_rank(gram) < p:
        raise RankDeficiencyError(
            f"weighted design has rank {np.linalg.matrix_rank(gram)} < {p} features and no ridge penalty"
        )
    beta = np.linalg.solve(gram + penalty * np.eye(p), rhs) if p else np.zeros(0)
    return beta, float(y_mean - x_mean @ beta)


def weighted_r2(y, y_hat, w) -> float:
    y, y_hat, w = (np.asarray(a, dtype=np.float64) for a in (y, y_hat, w))
    y_mean = w @ y / w.sum()
    total = w @ (y - y_mean) ** 2
    if total <= 1e-300:
        return 1.0
    return float(1.0 - (w @ (y - y_hat) ** 2) / total)


def fit_surrogate(
    samples: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    config: LimeConfig,
    feature_names: Sequence[str] | None = None,
) -> Explanation:
    """Full weighted ridge fit, keep the top_k |coefficients|, refit on those."""
    z = np.asarray(samples, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.ndim != 2 or len(z) < 2:
        raise CannotExplainError("need at least two samples to fit a surrogate")
    n = z.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(n)]
    full, _ = weighted_ridge(z, y, weights, config.ridge_penalty)
    selected = np.sort(np.argsort(-np.abs(full), kind="stable")[:config.top_k])
    beta, intercept = weighted_ridge(z[:, selected], y, weights, config.ridge_penalty)
    fidelity = weighted_r2(y, intercept + z[:, selected] @ beta, weights)
    ranked = sorted(zip(selected, beta), key=lambda t: (-abs(t[1]), t[0]))
    return Explanation(
        token_weights=tuple((names[i], float(b)) for i, b in ranked),
        intercept=intercept,
        local_fidelity=fidelity,
        predicted_probabilities=(float(1.0 - y[0]), float(y[0])),
        num_features=n,
        config=config,
    )


def explain(review: str, model: BlackBox, config: LimeConfig = LimeConfig(),
            review_id: str | None = None) -> Explanation:
    instance = InterpretableInstance.from_text(review)
    if len(instance) == 0:
        raise CannotExplainError("review is empty after preprocessing")
    rng = stream(config.seed, "lime")
    z, texts = perturb(instance, config, rng)
    probs = np.asarray(model(texts), dtype=np.float64).reshape(-1)
    if probs.shape != (len(texts),):
        raise ValueError(f"black box returned {probs.shape}, expected ({len(texts)},)")
    weights = proximity(np.ones(len(instance)), z, config.kernel_width)
    exp = fit_surrogate(z, probs, weights, config, instance.distinct_tokens)
    p1 = float(probs[0])
    return Explanation(
        token_weights=exp.token_weights,
        intercept=exp.intercept,
        local_fidelity=exp.local_fidelity,
        predicted_probabilities=(1.0 - p1, p1),
        num_features=len(instance),
        review_id=review_id,
        config=config,
    )
