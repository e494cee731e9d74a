"""Federated min-max AUC training over simulated in-process clients.

Three drivers share one stagewise loop:

* ``run_coda_plus``: local proximal SGDA with periodic averaging; each
  stage returns the time- and client-averaged iterate.
* ``run_npa``: the same with a window of one and local mini-batches.
* ``run_codasca``: local steps corrected by primal and dual control
  variates, followed by server-side extrapolation.

Every stochastic draw of client ``k`` at local step ``t`` of round ``r`` in
stage ``s`` comes from ``derive_stream(seed, s, r, k, t)`` (all 0-based), and
client results are combined in ascending client order, so a run is
reproducible bit for bit whatever the number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .core import (
    SERVER,
    ConfigError,
    DivergenceError,
    EmptyDatasetError,
    PrimalDualPoint,
    derive_stream,
)
from .data import ClientShard, Dataset, shards_union
from .metrics import RunTrace, TraceRow, duality_gap_linear, empirical_auc
from .models import ScorerSpec, init_params, score_batch
from .objective import ObjectiveContext, dataset_objective, minibatch_grad
from .schedules import Stage, StageSchedule

OUTPUT_MODES = ("random_round", "last")


@dataclass
class ControlVariate:
    c_v: np.ndarray
    c_alpha: float = 0.0

    @classmethod
    def zeros(cls, dim: int) -> "ControlVariate":
        return cls(np.zeros(dim), 0.0)


@dataclass
class CommLedger:
    """Communication counters. ``vectors_sent`` counts primal-dual sized
    payloads (``d + 3`` floats each, one per client per direction)."""

    rounds: int = 0
    vectors_sent: int = 0
    bytes_sent: int = 0
    setup_rounds: int = 0

    def record(self, rounds: int, vectors: int, floats: int):
        self.rounds += rounds
        self.vectors_sent += vectors
        self.bytes_sent += 8 * floats


@dataclass
class ClientState:
    client_id: int
    v: np.ndarray
    alpha: float
    cv: ControlVariate | None = None
    sum_v: np.ndarray | None = None
    sum_alpha: float = 0.0


def resolve_threads(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("FEDMAX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FEDMAX_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


class Federation:
    """Shards, scorer and seed shared by every client, plus the worker pool."""

    def __init__(self, shards, scorer: ScorerSpec, seed: int = 0, threads: int | None = None):
        self.shards: list[ClientShard] = list(shards)
        if not self.shards:
            raise ConfigError("need at least one client")
        for k, shard in enumerate(self.shards):
            if len(shard) == 0:
                raise EmptyDatasetError(f"client {k} has no data")
            if shard.X.shape[1] != scorer.input_dim:
                raise ConfigError(f"client {k} has {shard.X.shape[1]} features, scorer expects {scorer.input_dim}")
        self.scorer = scorer
        self.seed = int(seed)
        n = sum(len(s) for s in self.shards)
        n_pos = sum(int(np.sum(s.y == 1)) for s in self.shards)
        if n_pos == 0 or n_pos == n:
            raise ConfigError("training data must contain both classes")
        self.p = n_pos / n  # global ratio, broadcast once at setup
        self.threads = min(resolve_threads(threads), self.K)
        self._pool = None

    @property
    def K(self) -> int:
        return len(self.shards)

    @property
    def dim(self) -> int:
        """Length of the flat primal vector ``(w, a, b)``."""
        return self.scorer.n_params + 2

    def map(self, fn, items) -> list:
        items = list(items)
        if self.threads <= 1:
            return [fn(x) for x in items]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.threads)
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def draw_indices(seed: int, stage: int, round: int, client: int, iter: int, n: int, m: int = 1) -> np.ndarray:
    """Indices (with replacement) of the ``m`` samples a client uses at one step."""
    return derive_stream(seed, stage, round, client, iter).generator().integers(n, size=m)


def client_stochastic_grad(fed: Federation, ctx: ObjectiveContext, k: int, v, alpha: float,
                           stage: int, round: int, iter: int, batch_m: int = 1):
    """The mini-batch gradient client ``k`` would use at the given step."""
    shard = fed.shards[k]
    idx = draw_indices(fed.seed, stage, round, k, iter, len(shard), batch_m)
    return minibatch_grad(ctx, fed.scorer, np.asarray(v, dtype=np.float64), alpha, shard.X[idx], shard.y[idx])


def _ordered_sum(values) -> np.ndarray:
    total = np.array(values[0], dtype=np.float64, copy=True)
    for v in values[1:]:
        total += v
    return total


class _Window(NamedTuple):
    v: np.ndarray
    alpha: float
    sum_gv: np.ndarray
    sum_galpha: float
    sum_v: np.ndarray
    sum_alpha: float
    points: list | None


def _local_steps(fed: Federation, k: int, v: np.ndarray, alpha: float, ctx: ObjectiveContext,
                 eta: float, steps: int, stage: int, round: int, iter_offset: int,
                 batch_m: int, correction=None, record: bool = False) -> _Window:
    shard = fed.shards[k]
    X, y, n = shard.X, shard.y, len(shard)
    v = v.copy()
    sum_gv = np.zeros_like(v)
    sum_ga = 0.0
    sum_v = np.zeros_like(v)
    sum_a = 0.0
    points = [] if record else None
    for t in range(steps):
        if record:
            points.append((v.copy(), alpha))
        idx = draw_indices(fed.seed, stage, round, k, t, n, batch_m)
        gv, ga = minibatch_grad(ctx, fed.scorer, v, alpha, X[idx], y[idx])
        sum_gv += gv
        sum_ga += ga
        if correction is not None:
            gv = gv + correction[0]
            ga = ga + correction[1]
        with np.errstate(over="ignore", invalid="ignore"):  # caught by the check below
            v -= eta * gv
            alpha += eta * ga
        if not (np.isfinite(alpha) and np.isfinite(v).all()):
            raise DivergenceError(stage + 1, iter_offset + t + 1, k)
        sum_v += v
        sum_a += alpha
    if record:
        points.append((v.copy(), alpha))
    return _Window(v, alpha, sum_gv, sum_ga, sum_v, sum_a, points)


def _stage_context(fed: Federation, stage: Stage, center: np.ndarray) -> ObjectiveContext:
    if stage.prox_coeff > 0:
        return ObjectiveContext(fed.p, stage.prox_coeff, center)
    return ObjectiveContext(fed.p)


def _as_flat(v0) -> np.ndarray:
    if isinstance(v0, PrimalDualPoint):
        return v0.v
    return np.array(v0, dtype=np.float64)


OnComm = Callable[[int, int, np.ndarray, float, ObjectiveContext], None]


def coda_plus_inner(fed: Federation, v0, alpha0: float, stage: Stage, *, stage_index: int = 0,
                    ledger: CommLedger | None = None, history: list | None = None,
                    on_comm: OnComm | None = None, iter_offset: int = 0) -> tuple[np.ndarray, float]:
    """One stage of CODA+ (local proximal SGDA with periodic averaging).

    All clients start from ``(v0, alpha0)``; ``v0`` is also the prox
    centre. Every ``window_i`` steps the client iterates are averaged and
    redistributed. Returns the average over clients and over iterations
    ``1..T`` of the local iterates. A final communication collects the
    running sums unless ``window_i == 1``, in which case the server has
    already seen every (synchronised) iterate.

    ``history`` receives the averaged ``(v, alpha)`` after every
    communication; ``on_comm(round, steps_done, v, alpha, ctx)`` is called
    at the same moments.
    """
    ledger = CommLedger() if ledger is None else ledger
    v0 = _as_flat(v0)
    ctx = _stage_context(fed, stage, v0)
    K, T, I, dim = fed.K, stage.iters_t, stage.window_i, fed.dim
    states = [ClientState(k, v0.copy(), float(alpha0), sum_v=np.zeros(dim)) for k in range(K)]
    v_avg, a_avg = v0.copy(), float(alpha0)
    done = 0
    for r in range(stage.rounds_r):
        steps = min(I, T - done)

        def work(k, r=r, steps=steps):
            s = states[k]
            return _local_steps(fed, k, s.v, s.alpha, ctx, stage.eta_local, steps,
                                stage_index, r, iter_offset + done, stage.batch_m)

        results = fed.map(work, range(K))
        done += steps
        for s, res in zip(states, results):
            s.sum_v += res.sum_v
            s.sum_alpha += res.sum_alpha
        v_avg = _ordered_sum([res.v for res in results]) / K
        a_avg = float(sum(res.alpha for res in results) / K)
        for s in states:
            s.v = v_avg.copy()
            s.alpha = a_avg
        ledger.record(1, 2 * K, 2 * K * (dim + 1))
        if history is not None:
            history.append((v_avg.copy(), a_avg))
        if on_comm is not None:
            on_comm(r + 1, done, v_avg, a_avg, ctx)
    if I > 1:
        ledger.record(1, K, K * (dim + 1))
    v_bar = _ordered_sum([s.sum_v for s in states]) / (K * T)
    a_bar = float(sum(s.sum_alpha for s in states) / (K * T))
    return v_bar, a_bar


class CodascaRound(NamedTuple):
    v: np.ndarray
    alpha: float
    client_cvs: list
    global_cv: ControlVariate
    comm_rounds: int
    vectors_sent: int
    floats_sent: int
    trajectories: list | None  # per client: points where gradients were taken, then the end point


def codasca_round(fed: Federation, ctx: ObjectiveContext, client_cvs, global_cv: ControlVariate,
                  v_prev, alpha_prev: float, eta_local: float, eta_global: float, window: int, *,
                  stage_index: int = 0, round_index: int = 0, batch_m: int = 1, iter_offset: int = 0,
                  record: bool = False) -> CodascaRound:
    """One communication round of CODASCA.

    Each client runs ``window`` local steps with the gradient corrected by
    ``c - c_k``, updates its control variates from the displacement of its
    iterate, and the server averages control variates and end-of-round
    iterates, then extrapolates by ``eta_global``.
    """
    K, dim = fed.K, fed.dim
    v_prev = _as_flat(v_prev)
    alpha_prev = float(alpha_prev)
    if eta_local <= 0:
        raise ConfigError("CODASCA needs eta_local > 0")

    def work(k):
        cv = client_cvs[k]
        corr = (global_cv.c_v - cv.c_v, global_cv.c_alpha - cv.c_alpha)
        return _local_steps(fed, k, v_prev, alpha_prev, ctx, eta_local, window, stage_index,
                            round_index, iter_offset, batch_m, correction=corr, record=record)

    results = fed.map(work, range(K))
    scale = 1.0 / (window * eta_local)
    new_cvs = []
    for cv, res in zip(client_cvs, results):
        c_v = cv.c_v - global_cv.c_v + scale * (v_prev - res.v)
        c_a = cv.c_alpha - global_cv.c_alpha + scale * (res.alpha - alpha_prev)
        new_cvs.append(ControlVariate(c_v, float(c_a)))
    new_global = ControlVariate(
        _ordered_sum([c.c_v for c in new_cvs]) / K, float(sum(c.c_alpha for c in new_cvs) / K)
    )
    v_r = _ordered_sum([res.v for res in results]) / K
    a_r = float(sum(res.alpha for res in results) / K)
    if eta_global != 1.0:
        v_r = v_prev + eta_global * (v_r - v_prev)
        a_r = alpha_prev + eta_global * (a_r - alpha_prev)
    # uplink: (c_k, v_k) per client; downlink: (c, v) per client
    payload = 2 * (dim + 1)
    trajectories = [res.points for res in results] if record else None
    return CodascaRound(v_r, a_r, new_cvs, new_global, 1, 4 * K, 2 * K * payload, trajectories)


def codasca_inner(fed: Federation, v0, alpha0: float, stage: Stage, *, stage_index: int = 0,
                  output: str = "random_round", ledger: CommLedger | None = None,
                  on_comm: OnComm | None = None, iter_offset: int = 0,
                  round_log: list | None = None) -> tuple[np.ndarray, float]:
    """One CODASCA stage: control variates start at zero, ``rounds_r``
    rounds are run, and the iterate of a seeded uniformly drawn round (or of
    the last round) is returned. ``round_log`` receives every
    ``CodascaRound``."""
    if output not in OUTPUT_MODES:
        raise ConfigError(f"output must be one of {OUTPUT_MODES}")
    ledger = CommLedger() if ledger is None else ledger
    v0 = _as_flat(v0)
    ctx = _stage_context(fed, stage, v0)
    R, I, T = stage.rounds_r, stage.window_i, stage.iters_t
    if output == "last":
        chosen_round = R
    else:
        chosen_round = int(derive_stream(fed.seed, stage_index, 0, SERVER, 0).generator().integers(R)) + 1
    client_cvs = [ControlVariate.zeros(fed.dim) for _ in range(fed.K)]
    global_cv = ControlVariate.zeros(fed.dim)
    v, alpha = v0, float(alpha0)
    chosen = None
    done = 0
    for r in range(R):
        steps = min(I, T - done)
        res = codasca_round(fed, ctx, client_cvs, global_cv, v, alpha, stage.eta_local, stage.eta_global,
                            steps, stage_index=stage_index, round_index=r, batch_m=stage.batch_m,
                            iter_offset=iter_offset + done)
        done += steps
        ledger.record(res.comm_rounds, res.vectors_sent, res.floats_sent)
        client_cvs, global_cv, v, alpha = res.client_cvs, res.global_cv, res.v, res.alpha
        if round_log is not None:
            round_log.append(res)
        if r + 1 == chosen_round:
            chosen = (v.copy(), alpha)
        if on_comm is not None:
            on_comm(r + 1, done, v, alpha, ctx)
    return chosen


@dataclass
class RunConfig:
    scorer: ScorerSpec
    seed: int = 0
    eval_every: int = 100
    init: PrimalDualPoint | None = None
    codasca_output: str = "random_round"
    threads: int | None = None

    def __post_init__(self):
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.codasca_output not in OUTPUT_MODES:
            raise ConfigError(f"codasca_output must be one of {OUTPUT_MODES}")


@dataclass
class RunResult:
    trace: RunTrace
    ledger: CommLedger
    point: PrimalDualPoint
    stage_outputs: list = field(default_factory=list)
    prox_centers: list = field(default_factory=list)
    total_iters: int = 0
    total_samples: int = 0


class _Evaluator:
    def __init__(self, fed: Federation, test: Dataset | None):
        self.fed = fed
        self.train = shards_union(fed.shards)
        self.test = self.train if test is None else test
        self.spec = fed.scorer

    def row(self, stage, round, cum_iters, comm, v, alpha, ctx) -> TraceRow:
        obj = dataset_objective(ctx.without_prox(), self.spec, v, alpha, self.train.X, self.train.y)
        auc = empirical_auc(score_batch(self.spec, v[:-2], self.test.X), self.test.y)
        gap = None
        if self.spec.is_linear and ctx.has_prox:
            gap = duality_gap_linear(PrimalDualPoint.from_v(v, alpha), ctx, self.train.X, self.train.y)
        return TraceRow(stage, round, cum_iters, comm, obj, auc, gap)


def _initial_point(fed: Federation, config: RunConfig) -> tuple[np.ndarray, float]:
    if config.init is not None:
        if config.init.dim != fed.scorer.n_params:
            raise ConfigError("initial point does not match the scorer")
        return config.init.v, config.init.alpha
    return np.concatenate([init_params(fed.scorer, config.seed), [0.0, 0.0]]), 0.0


def _run(algorithm: str, shards, schedule: StageSchedule, config: RunConfig, test: Dataset | None) -> RunResult:
    with Federation(shards, config.scorer, config.seed, config.threads) as fed:
        ev = _Evaluator(fed, test)
        ledger = CommLedger(setup_rounds=1)
        trace = RunTrace()
        v, alpha = _initial_point(fed, config)
        total = schedule.total_iters
        first_ctx = _stage_context(fed, schedule[0], v)
        trace.append(ev.row(0, 0, 0, 0, v, alpha, first_ctx))
        every = config.eval_every
        next_eval = every
        cum = 0
        result = RunResult(trace, ledger, None, total_iters=total)
        ctx = first_ctx
        last_round = 0
        for s, stage in enumerate(schedule):
            result.prox_centers.append(v.copy())
            stage_start = cum

            def on_comm(r, done, v_now, a_now, ctx_now, s=s, stage_start=stage_start):
                nonlocal next_eval
                now = stage_start + done
                if next_eval <= now < total:
                    trace.append(ev.row(s + 1, r, now, ledger.rounds, v_now, a_now, ctx_now))
                    next_eval = (now // every + 1) * every

            ctx = _stage_context(fed, stage, v)
            rounds_before = ledger.rounds
            if algorithm == "codasca":
                v, alpha = codasca_inner(fed, v, alpha, stage, stage_index=s, output=config.codasca_output,
                                         ledger=ledger, on_comm=on_comm, iter_offset=cum)
            else:
                v, alpha = coda_plus_inner(fed, v, alpha, stage, stage_index=s, ledger=ledger,
                                           on_comm=on_comm, iter_offset=cum)
            last_round = ledger.rounds - rounds_before
            cum += stage.iters_t
            result.stage_outputs.append((v.copy(), alpha))
            result.total_samples += fed.K * stage.iters_t * stage.batch_m
        trace.append(ev.row(len(schedule), last_round, cum, ledger.rounds, v, alpha, ctx))
        result.point = PrimalDualPoint.from_v(v, alpha)
        return result


def run_coda_plus(shards, schedule: StageSchedule, config: RunConfig, test: Dataset | None = None) -> RunResult:
    """Stagewise CODA+: each stage's averaged output (primal and dual) seeds
    the next stage and becomes its prox centre."""
    return _run("coda_plus", shards, schedule, config, test)


def run_npa(shards, schedule: StageSchedule, config: RunConfig, test: Dataset | None = None) -> RunResult:
    """Naive parallel baseline: CODA+ with communication after every
    iteration; each client averages ``batch_m`` samples per step."""
    return _run("npa", shards, schedule.with_window(1), config, test)


def run_codasca(shards, schedule: StageSchedule, config: RunConfig, test: Dataset | None = None) -> RunResult:
    return _run("codasca", shards, schedule, config, test)


RUNNERS = {"npa": run_npa, "coda_plus": run_coda_plus, "codasca": run_codasca}
