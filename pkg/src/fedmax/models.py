"""Scoring functions ``h(w; x)`` with hand-written parameter gradients.

Two scorers are provided:

* ``linear``: ``h = w . x`` with ``d = input_dim`` parameters.
* ``mlp1``: one tanh hidden layer, parameters packed as
  ``[W1 (hidden x input, row-major), b1 (hidden), w2 (hidden), b2]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import SERVER, ShapeError, derive_stream


class ScorerKind(str, Enum):
    LINEAR = "linear"
    MLP1 = "mlp1"


@dataclass(frozen=True)
class ScorerSpec:
    kind: ScorerKind
    input_dim: int
    hidden_dim: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "kind", ScorerKind(self.kind))
        if self.input_dim < 1:
            raise ShapeError("input_dim must be >= 1")
        if self.kind is ScorerKind.MLP1:
            if self.hidden_dim < 1:
                raise ShapeError("mlp1 needs hidden_dim >= 1")
            if self.activation != "tanh":
                raise ShapeError(f"unsupported activation {self.activation!r}")

    @classmethod
    def linear(cls, input_dim: int) -> "ScorerSpec":
        return cls(ScorerKind.LINEAR, input_dim)

    @classmethod
    def mlp1(cls, input_dim: int, hidden_dim: int) -> "ScorerSpec":
        return cls(ScorerKind.MLP1, input_dim, hidden_dim)

    @property
    def is_linear(self) -> bool:
        return self.kind is ScorerKind.LINEAR

    @property
    def n_params(self) -> int:
        if self.is_linear:
            return self.input_dim
        return self.hidden_dim * (self.input_dim + 1) + self.hidden_dim + 1


def _check(spec: ScorerSpec, w: np.ndarray, x: np.ndarray):
    if w.shape != (spec.n_params,):
        raise ShapeError(f"expected {spec.n_params} parameters, got shape {w.shape}")
    if x.shape[-1] != spec.input_dim:
        raise ShapeError(f"expected {spec.input_dim} features, got shape {x.shape}")


def _unpack(spec: ScorerSpec, w: np.ndarray):
    H, D = spec.hidden_dim, spec.input_dim
    W1 = w[: H * D].reshape(H, D)
    b1 = w[H * D : H * D + H]
    w2 = w[H * D + H : H * D + 2 * H]
    return W1, b1, w2, w[-1]


def score_batch(spec: ScorerSpec, w, X) -> np.ndarray:
    """Scores for each row of ``X``."""
    w = np.asarray(w, dtype=np.float64)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check(spec, w, X)
    if spec.is_linear:
        return X @ w
    W1, b1, w2, b2 = _unpack(spec, w)
    return np.tanh(X @ W1.T + b1) @ w2 + b2


def score_grad_batch(spec: ScorerSpec, w, X) -> np.ndarray:
    """Rows are ``grad_w h(w; x_i)``; shape ``(m, n_params)``."""
    w = np.asarray(w, dtype=np.float64)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check(spec, w, X)
    if spec.is_linear:
        return X
    W1, b1, w2, _ = _unpack(spec, w)
    t = np.tanh(X @ W1.T + b1)
    delta = w2 * (1.0 - t * t)  # dh / d(pre-activation)
    m = X.shape[0]
    dW1 = (delta[:, :, None] * X[:, None, :]).reshape(m, -1)
    return np.hstack([dW1, delta, t, np.ones((m, 1))])


def score(spec: ScorerSpec, w, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("score expects a single feature vector")
    return float(score_batch(spec, w, x[None, :])[0])


def score_grad(spec: ScorerSpec, w, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("score_grad expects a single feature vector")
    return score_grad_batch(spec, w, x[None, :])[0].copy()


def init_params(spec: ScorerSpec, seed: int = 0) -> np.ndarray:
    """Starting weights: zeros for the linear scorer, scaled Gaussians for
    the hidden layer of ``mlp1`` (zeros would leave every hidden unit
    identical)."""
    if spec.is_linear:
        return np.zeros(spec.n_params)
    rng = derive_stream(seed, 0, 0, SERVER, 0).generator()
    H, D = spec.hidden_dim, spec.input_dim
    W1 = rng.normal(scale=1.0 / np.sqrt(D), size=H * D)
    w2 = rng.normal(scale=1.0 / np.sqrt(H), size=H)
    return np.concatenate([W1, np.zeros(H), w2, [0.0]])
