"""Evaluation: empirical AUC, exact duality gap for linear scorers,
client-drift proxy and the run trace written by experiments."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .core import EmptyDatasetError, NumericalError, PrimalDualPoint, ShapeError, SingleClassError
from .models import ScorerSpec
from .objective import ObjectiveContext, full_objective, minibatch_grad


def empirical_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half (midrank method)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be aligned 1-d arrays")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = rankdata(scores)  # midranks, so every value is a multiple of 1/2
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _quadratic_parts(ctx: ObjectiveContext, X, y):
    """Write the linear-scorer objective as
    ``v'Av + 2(1+alpha) c'v - p(1-p) alpha^2`` plus the prox term."""
    p = ctx.p
    n, d = X.shape
    pos = y > 0
    Z = np.zeros((n, d + 2))
    Z[:, :d] = X
    Z[pos, d] = -1.0
    Z[~pos, d + 1] = -1.0
    q = np.where(pos, 1 - p, p)
    A = (Z * q[:, None]).T @ Z / n
    s = np.where(pos, -(1 - p), p)
    c = np.zeros(d + 2)
    c[:d] = s @ X / n
    return A, c


def _solve_spd(M, rhs):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"prox system is not safely positive definite (cond={cond:.3g})")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("prox system is not positive definite") from exc
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def _check_linear_gap_inputs(ctx, X, y):
    if not ctx.has_prox:
        raise NumericalError("duality gap needs prox_coeff > 0")
    pos = y > 0
    if pos.all() or not pos.any():
        raise SingleClassError("duality gap needs both classes")


def duality_gap_linear(point: PrimalDualPoint, ctx: ObjectiveContext, X, y) -> float:
    """``max_a' f^s(v, a') - min_v' f^s(v', alpha)`` for ``h = w . x``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    _check_linear_gap_inputs(ctx, X, y)
    if point.dim != X.shape[1]:
        raise ShapeError("gap is defined for linear scorers: len(w) must equal the feature count")
    p = ctx.p
    A, c = _quadratic_parts(ctx, X, y)
    v = point.v
    alpha_best = float(c @ v) / (p * (1 - p))
    gamma = ctx.prox_coeff
    M = 2 * A + gamma * np.eye(v.size)
    v_best = _solve_spd(M, gamma * ctx.prox_center - 2 * (1 + point.alpha) * c)
    upper = full_objective(ctx, PrimalDualPoint.from_v(v, alpha_best), y, X @ v[:-2])
    lower = full_objective(ctx, PrimalDualPoint.from_v(v_best, point.alpha), y, X @ v_best[:-2])
    return upper - lower


def linear_saddle(ctx: ObjectiveContext, X, y) -> PrimalDualPoint:
    """Exact saddle point of the proximal stage objective for ``h = w . x``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    _check_linear_gap_inputs(ctx, X, y)
    p = ctx.p
    A, c = _quadratic_parts(ctx, X, y)
    gamma = ctx.prox_coeff
    M = 2 * A + gamma * np.eye(c.size) + 2 * np.outer(c, c) / (p * (1 - p))
    v = _solve_spd(M, gamma * ctx.prox_center - 2 * c)
    return PrimalDualPoint.from_v(v, float(c @ v) / (p * (1 - p)))


def client_drift_proxy(shards, point: PrimalDualPoint, ctx: ObjectiveContext, spec: ScorerSpec) -> float:
    """``(1/K) sum_k ||grad f_k - grad f||^2`` over the joint (v, alpha)
    gradient, with ``f`` the unweighted client average."""
    if len(shards) < 2:
        raise ValueError("drift proxy needs at least two shards")
    grads = []
    for shard in shards:
        if len(shard) == 0:
            raise EmptyDatasetError(f"shard {shard.client_id} is empty")
        gv, ga = minibatch_grad(ctx, spec, point.v, point.alpha, shard.X, shard.y)
        grads.append(np.append(gv, ga))
    grads = np.array(grads)
    mean = grads.mean(axis=0)
    return float(np.mean(np.sum((grads - mean) ** 2, axis=1)))


TRACE_COLUMNS = ("stage", "round", "cum_iters", "cum_comm_rounds", "train_objective", "test_auc", "duality_gap")


class TraceRow(NamedTuple):
    stage: int
    round: int
    cum_iters: int
    cum_comm_rounds: int
    train_objective: float
    test_auc: float
    duality_gap: float | None


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow):
        if self.rows:
            last = self.rows[-1]
            if row.cum_iters < last.cum_iters or row.cum_comm_rounds < last.cum_comm_rounds:
                raise ValueError("trace counters must be non-decreasing")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv_string(self) -> str:
        out = io.StringIO()
        out.write(",".join(TRACE_COLUMNS) + "\n")
        for r in self.rows:
            gap = "" if r.duality_gap is None else repr(float(r.duality_gap))
            out.write(
                f"{r.stage},{r.round},{r.cum_iters},{r.cum_comm_rounds},"
                f"{float(r.train_objective)!r},{float(r.test_auc)!r},{gap}\n"
            )
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_string())

    @classmethod
    def from_csv_string(cls, text: str) -> "RunTrace":
        lines = text.strip().splitlines()
        if not lines or tuple(lines[0].split(",")) != TRACE_COLUMNS:
            raise ValueError("unexpected trace header")
        trace = cls()
        for line in lines[1:]:
            f = line.split(",")
            trace.rows.append(
                TraceRow(int(f[0]), int(f[1]), int(f[2]), int(f[3]), float(f[4]), float(f[5]),
                         float(f[6]) if f[6] else None)
            )
        return trace

