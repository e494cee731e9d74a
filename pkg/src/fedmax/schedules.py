"""Per-stage hyperparameters: theory-driven schedules for CODA+ and CODASCA
and the piecewise-constant practical schedule used in experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import ConfigError


@dataclass(frozen=True)
class TheoryConstants:
    """Problem constants: per-sample smoothness ``ell``, smoothness ``big_l``
    of the primal function, PL constant ``mu``, strong concavity ``mu2``,
    variance bound ``sigma2``, client drift ``drift_d`` and initial gap
    ``delta0``."""

    ell: float
    big_l: float
    mu: float
    mu2: float
    sigma2: float = 1.0
    drift_d: float = 0.0
    delta0: float = 1.0

    def __post_init__(self):
        positive = ("ell", "big_l", "mu", "mu2", "sigma2", "delta0")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.drift_d < 0:
            raise ConfigError("drift_d must be >= 0")
        if self.mu > self.big_l:
            raise ConfigError("PL constant mu cannot exceed smoothness L")

    @property
    def l_hat(self) -> float:
        return self.big_l + 2 * self.ell


@dataclass(frozen=True)
class Stage:
    """One stage. ``iters_t`` local iterations are split into communication
    windows of ``window_i`` steps; a trailing partial window is allowed.
    ``window_exact``/``iters_exact`` keep the real-valued theory formulas
    before rounding."""

    eta_local: float
    window_i: int
    iters_t: int
    prox_coeff: float = 0.0
    eta_global: float = 1.0
    batch_m: int = 1
    window_exact: float | None = None
    iters_exact: float | None = None

    def __post_init__(self):
        if self.window_i < 1 or self.iters_t < 1 or self.batch_m < 1:
            raise ConfigError("window_i, iters_t and batch_m must be >= 1")
        if self.eta_local < 0 or self.eta_global <= 0 or self.prox_coeff < 0:
            raise ConfigError("step sizes and prox_coeff must be non-negative (eta_global > 0)")

    @property
    def rounds_r(self) -> int:
        return -(-self.iters_t // self.window_i)


@dataclass(frozen=True)
class StageSchedule:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ConfigError("schedule needs at least one stage")

    def __iter__(self):
        return iter(self.stages)

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i) -> Stage:
        return self.stages[i]

    @property
    def total_iters(self) -> int:
        return sum(s.iters_t for s in self.stages)

    def eta_at(self, iteration: int) -> float:
        """Local step size in force at a 0-based global iteration."""
        start = 0
        for s in self.stages:
            if iteration < start + s.iters_t:
                return s.eta_local
            start += s.iters_t
        raise IndexError(f"iteration {iteration} beyond schedule of {start}")

    def with_window(self, window: int) -> "StageSchedule":
        return StageSchedule(tuple(replace(s, window_i=window, window_exact=None) for s in self.stages))


def theory_schedule_coda_plus(
    tc: TheoryConstants, eta0: float, K: int, heterogeneous: bool, S: int
) -> StageSchedule:
    """CODA+ schedule: geometric step decay with stage length and window
    growing to match."""
    if eta0 <= 0 or K < 1 or S < 1:
        raise ConfigError("need eta0 > 0, K >= 1, S >= 1")
    ratio = tc.mu / tc.l_hat
    c = ratio / (5 + ratio)
    stages = []
    for s in range(1, S + 1):
        eta = eta0 * math.exp(-(s - 1) * c)
        t_raw = 212.0 / (eta0 * min(tc.ell, tc.mu2)) * math.exp((s - 1) * c)
        i_raw = 1.0 / math.sqrt(K * eta) if heterogeneous else 1.0 / (K * eta)
        stages.append(
            Stage(
                eta_local=eta,
                window_i=max(1, math.floor(i_raw)),
                iters_t=math.ceil(t_raw),
                prox_coeff=2 * tc.ell,
                window_exact=i_raw,
                iters_exact=t_raw,
            )
        )
    return StageSchedule(tuple(stages))


def codasca_step_bound(tc: TheoryConstants) -> float:
    return min(1.0 / (3 * tc.ell + 3 * tc.ell**2 / tc.mu2), tc.mu2 / (40 * tc.ell**2))


def theory_schedule_codasca(
    tc: TheoryConstants, eta_tilde: float, i0: int, K: int, S: int
) -> StageSchedule:
    """CODASCA schedule: ``eta_g = sqrt(K)``, a fixed number of rounds per
    stage, windows growing geometrically and ``eta_l * eta_g * I = eta_tilde``."""
    if K < 1 or S < 1 or i0 < 1:
        raise ConfigError("need K >= 1, S >= 1, i0 >= 1")
    bound = codasca_step_bound(tc)
    if not 0 < eta_tilde <= bound:
        raise ConfigError(
            f"eta_tilde={eta_tilde} must satisfy 0 < eta_tilde <= "
            f"min(1/(3l + 3l^2/mu2), mu2/(40 l^2)) = {bound}"
        )
    c = 4 * tc.ell + 248.0 / 53.0 * tc.l_hat
    growth = 2 * tc.mu / (c + 2 * tc.mu)
    eta_g = math.sqrt(K)
    rounds = math.ceil(1000.0 / (eta_tilde * tc.mu2))
    stages = []
    for s in range(1, S + 1):
        i_raw = i0 * math.exp(growth * (s - 1))
        window = math.ceil(i_raw)
        stages.append(
            Stage(
                eta_local=eta_tilde / (eta_g * i_raw),
                window_i=window,
                iters_t=rounds * window,
                prox_coeff=2 * tc.ell,
                eta_global=eta_g,
                window_exact=i_raw,
            )
        )
    return StageSchedule(tuple(stages))


def practical_schedule(
    eta0: float,
    decay_every_t0: int,
    decay_factor: float,
    fixed_i: int,
    total_iters: int,
    *,
    prox_coeff: float = 0.0,
    eta_global: float = 1.0,
    batch_m: int = 1,
) -> StageSchedule:
    """Step size divided by ``decay_factor`` every ``decay_every_t0``
    iterations, constant window. Each constant-step segment is one stage."""
    if eta0 <= 0 or decay_every_t0 < 1 or decay_factor <= 0 or fixed_i < 1 or total_iters < 1:
        raise ConfigError("practical schedule parameters must all be positive")
    stages = []
    start, s = 0, 0
    while start < total_iters:
        length = min(decay_every_t0, total_iters - start)
        stages.append(
            Stage(
                eta_local=eta0 / decay_factor**s,
                window_i=fixed_i,
                iters_t=length,
                prox_coeff=prox_coeff,
                eta_global=eta_global,
                batch_m=batch_m,
            )
        )
        start += length
        s += 1
    return StageSchedule(tuple(stages))
