"""Synthetic imbalanced data, K-way client partitioning and CSV loading."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import ConfigError, IoError, ParseError, ShapeError
from .objective import Sample


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, +/-1 labels and an optional latent cluster id per row."""

    X: np.ndarray
    y: np.ndarray
    cluster: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ShapeError(f"inconsistent dataset shapes {X.shape} / {y.shape}")
        if not np.all((y == 1) | (y == -1)):
            raise ValueError("labels must be +1 or -1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.cluster is not None:
            cluster = np.asarray(self.cluster, dtype=np.int64)
            if cluster.shape != y.shape:
                raise ShapeError("cluster ids must align with labels")
            object.__setattr__(self, "cluster", cluster)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def pos_ratio(self) -> float:
        return float(np.mean(self.y == 1))

    def samples(self) -> Iterator[Sample]:
        for x, y in zip(self.X, self.y):
            yield Sample(x, int(y))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        cluster = None if self.cluster is None else self.cluster[idx]
        return Dataset(self.X[idx], self.y[idx], cluster)


@dataclass(frozen=True)
class ClientShard:
    X: np.ndarray
    y: np.ndarray
    client_id: int
    cluster_ids: frozenset = field(default_factory=frozenset)
    indices: np.ndarray | None = None  # row positions in the source dataset

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def local_pos_ratio(self) -> float:
        if len(self) == 0:
            return float("nan")
        return float(np.mean(self.y == 1))


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian cluster mixture.

    Each class has ``cluster_count`` sub-populations. Positive cluster ``j``
    and negative cluster ``j`` share a random offset drawn orthogonally to
    the class axis (coordinate 0), so with ``separation = 0`` both classes
    have the same distribution. ``pos_skew`` > 0 spreads the positives
    unevenly across clusters (Dirichlet with concentration ``1/pos_skew``),
    which makes local class ratios differ between cluster-disjoint clients.
    """

    n: int
    d: int
    imratio: float
    cluster_count: int = 1
    separation: float = 4.0
    noise_sd: float = 1.0
    cluster_spread: float = 2.0
    pos_skew: float = 0.0

    def validate(self):
        if self.n < 2 or self.d < 1:
            raise ConfigError("need n >= 2 and d >= 1")
        if not 0.0 < self.imratio < 1.0:
            raise ConfigError(f"imratio must lie in (0, 1), got {self.imratio}")
        n_pos = self.n_pos
        if n_pos < 1 or n_pos >= self.n:
            raise ConfigError("imratio * n must leave at least one sample per class")
        if self.cluster_count < 1 or self.cluster_count > min(n_pos, self.n - n_pos):
            raise ConfigError(
                f"cluster_count={self.cluster_count} needs at least one sample per cluster "
                f"({n_pos} positives, {self.n - n_pos} negatives)"
            )
        if self.separation < 0 or self.noise_sd <= 0 or self.cluster_spread < 0 or self.pos_skew < 0:
            raise ConfigError("separation, cluster_spread, pos_skew must be >= 0 and noise_sd > 0")

    @property
    def n_pos(self) -> int:
        return int(round(self.imratio * self.n))


def _split_counts(total: int, parts: int, weights: np.ndarray | None = None) -> np.ndarray:
    if weights is None:
        counts = np.full(parts, total // parts)
        counts[: total % parts] += 1
        return counts
    # one per cluster guaranteed, the rest by largest remainder
    extra = total - parts
    raw = weights / weights.sum() * extra
    counts = np.floor(raw).astype(np.int64)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: extra - counts.sum()]] += 1
    return counts + 1


def generate_synthetic(spec: SynthSpec, seed: int = 0) -> Dataset:
    """Draw a shuffled dataset with exactly ``round(imratio * n)`` positives.

    Cluster ids: positive cluster ``j`` is ``2j``, negative cluster ``j`` is
    ``2j + 1``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    C, d = spec.cluster_count, spec.d
    offsets = rng.normal(scale=spec.cluster_spread, size=(C, d))
    offsets[:, 0] = 0.0
    axis = np.zeros(d)
    axis[0] = 0.5 * spec.separation

    weights = rng.dirichlet(np.full(C, 1.0 / spec.pos_skew)) if spec.pos_skew > 0 else None
    pos_counts = _split_counts(spec.n_pos, C, weights)
    neg_counts = _split_counts(spec.n - spec.n_pos, C)

    blocks, labels, clusters = [], [], []
    for j in range(C):
        for sign, count, cid in ((1, pos_counts[j], 2 * j), (-1, neg_counts[j], 2 * j + 1)):
            noise = rng.normal(scale=spec.noise_sd, size=(count, d))
            blocks.append(sign * axis + offsets[j] + noise)
            labels.append(np.full(count, sign))
            clusters.append(np.full(count, cid))
    perm = rng.permutation(spec.n)
    return Dataset(
        np.vstack(blocks)[perm], np.concatenate(labels)[perm], np.concatenate(clusters)[perm]
    )


def _shard(data: Dataset, idx: np.ndarray, client_id: int) -> ClientShard:
    idx = np.sort(np.asarray(idx, dtype=np.int64))
    cids = frozenset() if data.cluster is None else frozenset(int(c) for c in np.unique(data.cluster[idx]))
    return ClientShard(data.X[idx], data.y[idx], client_id, cids, idx)


def partition_heterogeneous(data: Dataset, K: int, seed: int = 0) -> list[ClientShard]:
    """Assign whole clusters to clients so no cluster is shared.

    Positive and negative clusters are dealt round-robin over independent
    seeded permutations, so a client's positives and negatives generally
    come from unrelated sub-populations.
    """
    if data.cluster is None:
        raise ConfigError("heterogeneous partitioning needs cluster ids")
    if K < 1:
        raise ConfigError("K must be >= 1")
    pos_ids = np.unique(data.cluster[data.y == 1])
    neg_ids = np.unique(data.cluster[data.y == -1])
    if set(pos_ids) & set(neg_ids):
        raise ConfigError("a cluster holds both labels; cannot split by class")
    if K > 1 and (len(pos_ids) < K or len(neg_ids) < K):
        raise ConfigError(
            f"K={K} exceeds cluster availability ({len(pos_ids)} positive, {len(neg_ids)} negative clusters)"
        )
    rng = np.random.default_rng(seed)
    perm_pos = rng.permutation(len(pos_ids))
    perm_neg = rng.permutation(len(neg_ids))
    owner = {}
    for i, j in enumerate(perm_pos):
        owner[int(pos_ids[j])] = i % K
    for i, j in enumerate(perm_neg):
        owner[int(neg_ids[j])] = i % K
    client_of_row = np.array([owner[int(c)] for c in data.cluster])
    return [_shard(data, np.flatnonzero(client_of_row == k), k) for k in range(K)]


def partition_homogeneous(data: Dataset, K: int, seed: int = 0) -> list[ClientShard]:
    """Uniform shuffle followed by a round-robin split."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    if len(data) < K:
        raise ConfigError(f"cannot split {len(data)} samples over {K} clients")
    perm = np.random.default_rng(seed).permutation(len(data))
    return [_shard(data, perm[k::K], k) for k in range(K)]


def shards_union(shards) -> Dataset:
    """Concatenate shards in client order."""
    return Dataset(np.vstack([s.X for s in shards]), np.concatenate([s.y for s in shards]))


def train_test_split(data: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded split stratified by label; each class keeps at least one test
    and one training row."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for label in (1, -1):
        idx = np.flatnonzero(data.y == label)
        if idx.size < 2:
            raise ConfigError(f"class {label} has fewer than two samples; cannot stratify")
        n_test = min(max(1, int(round(test_fraction * idx.size))), idx.size - 1)
        test_idx.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.ones(len(data), dtype=bool)
    mask[test_idx] = False
    return data.subset(np.flatnonzero(mask)), data.subset(test_idx)


def load_csv(path) -> Dataset:
    """Read ``label,f0,f1,...`` rows. Labels 1/-1, or 1/0 with 0 mapped to -1."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "label" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ParseError("header must be 'label,f0,f1,...'", 1)
        d = len(header) - 1
        rows, labels = [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}", line)
            try:
                label = float(row[0])
                feats = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric field ({exc})", line) from None
            if label == 1:
                labels.append(1)
            elif label in (0, -1):
                labels.append(-1)
            else:
                raise ParseError(f"label must be 1, -1 or 0, got {row[0]!r}", line)
            if not all(math.isfinite(f) for f in feats):
                raise ParseError("non-finite feature", line)
            rows.append(feats)
    if not rows:
        raise ParseError("no data rows", 2)
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels))


def save_csv(data: Dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(data.d)])
        for x, y in zip(data.X, data.y):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])
