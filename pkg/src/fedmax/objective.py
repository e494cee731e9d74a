"""Min-max square-surrogate AUC objective.

For a score ``h`` and label ``y`` the per-sample objective is::

    F = (1-p)(h-a)^2 [y=1] + p(h-b)^2 [y=-1]
        + 2(1+alpha)(p h [y=-1] - (1-p) h [y=1]) - p(1-p) alpha^2

optionally plus the proximal penalty ``(gamma/2)||v - v_center||^2`` on the
primal block ``v = (w, a, b)``. ``p`` is always the global positive ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    EmptyDatasetError,
    NumericalError,
    PrimalDualPoint,
    ShapeError,
    SingleClassError,
    as_vector,
)
from .models import ScorerSpec, score_batch, score_grad_batch


@dataclass(frozen=True)
class ObjectiveContext:
    """Global class ratio plus the optional proximal term of a stage."""

    p: float
    prox_coeff: float = 0.0
    prox_center: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"positive ratio p must lie in (0, 1), got {self.p}")
        if self.prox_coeff < 0:
            raise ValueError("prox_coeff must be non-negative")
        center = self.prox_center
        if isinstance(center, PrimalDualPoint):
            center = center.v
        if self.prox_coeff > 0:
            if center is None:
                raise ValueError("prox_center is required when prox_coeff > 0")
            center = as_vector(center, "prox_center").copy()
            center.setflags(write=False)
        else:
            center = None
        object.__setattr__(self, "prox_center", center)

    @property
    def mu2(self) -> float:
        """Strong-concavity constant in alpha."""
        return 2.0 * self.p * (1.0 - self.p)

    @property
    def has_prox(self) -> bool:
        return self.prox_coeff > 0

    def without_prox(self) -> "ObjectiveContext":
        return ObjectiveContext(self.p)

    def prox_grad(self, v: np.ndarray) -> np.ndarray:
        if not self.has_prox:
            return np.zeros_like(v)
        return self.prox_coeff * (v - self.prox_center)

    def prox_value(self, v: np.ndarray) -> float:
        if not self.has_prox:
            return 0.0
        diff = v - self.prox_center
        return 0.5 * self.prox_coeff * float(diff @ diff)


class Sample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class GradV:
    d_w: np.ndarray
    d_a: float
    d_b: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_w, [self.d_a, self.d_b]])


class InnerSolution(NamedTuple):
    a_star: float
    b_star: float
    alpha_star: float
    value: float


def _label(y) -> bool:
    if y == 1:
        return True
    if y == -1:
        return False
    raise ValueError(f"labels must be +1 or -1, got {y!r}")


def _finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NumericalError("non-finite input to objective")


def sample_loss(ctx: ObjectiveContext, point: PrimalDualPoint, y: int, h: float) -> float:
    """Single-sample ``F^s`` for a sample with label ``y`` and score ``h``."""
    p, a, b, al = ctx.p, point.a, point.b, point.alpha
    if _label(y):
        val = (1 - p) * (h - a) ** 2 - 2 * (1 + al) * (1 - p) * h
    else:
        val = p * (h - b) ** 2 + 2 * (1 + al) * p * h
    return val - p * (1 - p) * al**2 + ctx.prox_value(point.v)


def sample_grad_v(ctx: ObjectiveContext, point: PrimalDualPoint, sample: Sample, h: float, dh) -> GradV:
    """Gradient of the single-sample objective in ``(w, a, b)``.

    ``h`` is the model score at ``sample.x`` and ``dh`` its gradient in ``w``.
    """
    dh = as_vector(dh, "dh")
    _finite(h, dh, point.v, point.alpha)
    if dh.shape != point.w.shape:
        raise ShapeError("dh must have the same length as w")
    p, al = ctx.p, point.alpha
    if _label(sample.y):
        d_a = -2 * (1 - p) * (h - point.a)
        d_b = 0.0
        coef = 2 * (1 - p) * (h - point.a) - 2 * (1 + al) * (1 - p)
    else:
        d_a = 0.0
        d_b = -2 * p * (h - point.b)
        coef = 2 * p * (h - point.b) + 2 * (1 + al) * p
    d_w = coef * dh
    if ctx.has_prox:
        g = ctx.prox_grad(point.v)
        d_w = d_w + g[:-2]
        d_a += g[-2]
        d_b += g[-1]
    return GradV(d_w, float(d_a), float(d_b))


def sample_grad_alpha(ctx: ObjectiveContext, point: PrimalDualPoint, sample: Sample, h: float) -> float:
    _finite(h, point.alpha)
    p, al = ctx.p, point.alpha
    if _label(sample.y):
        return -2 * (1 - p) * h - 2 * p * (1 - p) * al
    return 2 * p * h - 2 * p * (1 - p) * al


def _per_sample(ctx, a, b, alpha, labels, scores):
    p = ctx.p
    pos = labels > 0
    alpha = np.float64(alpha)
    return np.where(
        pos,
        (1 - p) * (scores - a) ** 2 - 2 * (1 + alpha) * (1 - p) * scores,
        p * (scores - b) ** 2 + 2 * (1 + alpha) * p * scores,
    ) - p * (1 - p) * alpha**2


def _labels_scores(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ShapeError("labels and scores must be aligned 1-d arrays")
    if labels.size == 0:
        raise EmptyDatasetError("objective needs at least one sample")
    if not np.all((labels == 1) | (labels == -1)):
        raise ValueError("labels must be +1 or -1")
    return labels, scores


def full_objective(ctx: ObjectiveContext, point: PrimalDualPoint, labels, scores) -> float:
    """Empirical mean of the per-sample objective, plus the prox penalty."""
    labels, scores = _labels_scores(labels, scores)
    vals = _per_sample(ctx, point.a, point.b, point.alpha, labels, scores)
    return float(np.mean(vals)) + ctx.prox_value(point.v)


def closed_form_inner(ctx: ObjectiveContext, labels, scores) -> InnerSolution:
    """Exact saddle point in ``(a, b, alpha)`` for fixed scores (no prox).

    The objective is separable: ``a`` and ``b`` minimise the class-wise
    squared deviations and ``alpha`` maximises a concave quadratic. When
    ``ctx.p`` equals the empirical positive ratio, ``alpha* = b* - a*``.
    """
    labels, scores = _labels_scores(labels, scores)
    pos = labels > 0
    if pos.all() or not pos.any():
        raise SingleClassError("closed_form_inner needs both classes")
    p, n = ctx.p, labels.size
    a_star = float(scores[pos].mean())
    b_star = float(scores[~pos].mean())
    alpha_star = float((p * scores[~pos].sum() - (1 - p) * scores[pos].sum()) / (n * p * (1 - p)))
    point = PrimalDualPoint(np.zeros(0), a_star, b_star, alpha_star)
    value = full_objective(ctx.without_prox(), point, labels, scores)
    return InnerSolution(a_star, b_star, alpha_star, value)


def pairwise_auc_square_loss(labels, scores) -> float:
    """Mean of ``(1 - h_pos + h_neg)^2`` over all positive/negative pairs."""
    labels, scores = _labels_scores(labels, scores)
    pos = labels > 0
    if pos.all() or not pos.any():
        raise SingleClassError("pairwise loss needs both classes")
    margins = 1.0 - scores[pos][:, None] + scores[~pos][None, :]
    return float(np.mean(margins**2))


def minibatch_grad(ctx: ObjectiveContext, spec: ScorerSpec, v: np.ndarray, alpha: float, X, y):
    """Mean gradient of ``F^s`` over the rows of ``(X, y)``.

    Returns ``(grad_v, grad_alpha)`` with ``grad_v`` over the flat ``(w, a, b)``.
    """
    w, a, b = v[:-2], v[-2], v[-1]
    p = ctx.p
    h = score_batch(spec, w, X)
    dh = score_grad_batch(spec, w, X)
    pos = (y > 0).astype(np.float64)
    neg = 1.0 - pos
    m = h.shape[0]
    coef = pos * (2 * (1 - p)) * (h - a - (1 + alpha)) + neg * (2 * p) * (h - b + (1 + alpha))
    g = np.empty(v.shape[0])
    g[:-2] = coef @ dh / m
    g[-2] = -2 * (1 - p) * (pos @ (h - a)) / m
    g[-1] = -2 * p * (neg @ (h - b)) / m
    g_alpha = (2 * p * (neg @ h) - 2 * (1 - p) * (pos @ h)) / m - 2 * p * (1 - p) * alpha
    if ctx.has_prox:
        g += ctx.prox_coeff * (v - ctx.prox_center)
    return g, float(g_alpha)


def dataset_objective(ctx: ObjectiveContext, spec: ScorerSpec, v: np.ndarray, alpha: float, X, y) -> float:
    """``full_objective`` evaluated through the scorer."""
    point = PrimalDualPoint.from_v(v, alpha)
    return full_objective(ctx, point, y, score_batch(spec, point.w, X))
