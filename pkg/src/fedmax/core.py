"""Shared numeric types, error classes, seeded RNG streams and a
finite-difference gradient used to check every analytic gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# client index reserved for server-side draws (initialisation, output round)
SERVER = 2**32 - 1


class FedmaxError(Exception):
    """Base class for all library errors."""


class NumericalError(FedmaxError):
    pass


class EmptyDatasetError(FedmaxError):
    pass


class SingleClassError(FedmaxError):
    pass


class ShapeError(FedmaxError, ValueError):
    pass


class ConfigError(FedmaxError, ValueError):
    pass


class ParseError(FedmaxError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(FedmaxError, OSError):
    pass


class DivergenceError(FedmaxError, ArithmeticError):
    """Raised when an iterate stops being finite."""

    def __init__(self, stage: int, iteration: int, client: int | None = None):
        self.stage = stage
        self.iteration = iteration
        self.client = client
        where = f"stage {stage}, iteration {iteration}"
        if client is not None:
            where += f", client {client}"
        super().__init__(f"non-finite iterate at {where}")


def as_vector(x, name: str = "vector") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PrimalDualPoint:
    """Joint variable ``v = (w, a, b)`` together with the dual ``alpha``."""

    w: np.ndarray
    a: float
    b: float
    alpha: float

    def __post_init__(self):
        w = as_vector(self.w, "w").copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        for name in ("a", "b", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.all(np.isfinite(w)) and np.isfinite([self.a, self.b, self.alpha]).all()):
            raise NumericalError("PrimalDualPoint entries must be finite")

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @property
    def v(self) -> np.ndarray:
        """Flat primal vector ``[w..., a, b]``."""
        return np.concatenate([self.w, [self.a, self.b]])

    @classmethod
    def from_v(cls, v, alpha: float) -> "PrimalDualPoint":
        v = as_vector(v, "v")
        return cls(v[:-2], v[-2], v[-1], alpha)

    @classmethod
    def zeros(cls, d: int) -> "PrimalDualPoint":
        return cls(np.zeros(d), 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RngStream:
    """Deterministic stream keyed on ``(root_seed, (stage, round, client, iter))``.

    Draws come from a Philox counter generator: the root seed is the key and
    the path fills the upper counter words, leaving the lowest word as the
    block counter. Distinct paths therefore never share a counter block, and
    the order in which clients execute cannot change a draw.
    """

    root_seed: int
    path: tuple[int, int, int, int]

    def generator(self) -> np.random.Generator:
        stage, round_, client, it = self.path
        counter = [0, it, client, (stage << 32) | round_]
        return np.random.Generator(np.random.Philox(key=self.root_seed, counter=counter))


def derive_stream(root_seed: int, stage: int, round: int, client: int, iter: int) -> RngStream:
    path = (int(stage), int(round), int(client), int(iter))
    root_seed = int(root_seed)
    if root_seed < 0 or min(path) < 0:
        raise ConfigError(f"seed and stream path must be non-negative, got {root_seed}, {path}")
    if root_seed >= 2**64 or path[0] >= 2**32 or path[1] >= 2**32 or max(path[2:]) >= 2**64:
        raise ConfigError(f"seed or stream path out of range: {root_seed}, {path}")
    return RngStream(root_seed, path)


def finite_diff_grad(fn: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = as_vector(x, "x")
    grad = np.empty_like(x)
    step = np.zeros_like(x)
    for i in range(x.shape[0]):
        step[i] = h
        hi = fn(x + step)
        lo = fn(x - step)
        step[i] = 0.0
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericalError(f"non-finite function value near coordinate {i}")
        grad[i] = (hi - lo) / (2 * h)
    return grad
