import numpy as np
import pytest

from fedmax import SynthSpec, generate_synthetic, partition_heterogeneous, train_test_split


def reference_sample_loss(p, w, a, b, alpha, x, y, h=None):
    """Per-sample objective written out term by term, independent of the library."""
    if h is None:
        h = float(np.dot(w, x))
    if y == 1:
        return (1 - p) * (h - a) ** 2 - 2 * (1 + alpha) * (1 - p) * h - p * (1 - p) * alpha**2
    return p * (h - b) ** 2 + 2 * (1 + alpha) * p * h - p * (1 - p) * alpha**2


def reference_objective(p, labels, scores, a, b, alpha):
    return float(np.mean([reference_sample_loss(p, None, a, b, alpha, None, y, h) for y, h in zip(labels, scores)]))


def small_federation(n=400, d=5, imratio=0.2, clusters=4, K=4, seed=0):
    data = generate_synthetic(SynthSpec(n=n, d=d, imratio=imratio, cluster_count=clusters), seed)
    train, test = train_test_split(data, 0.25, seed)
    return partition_heterogeneous(train, K, seed), test


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
