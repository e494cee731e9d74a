import numpy as np
import pytest

from fedmax import ScorerSpec, ShapeError, finite_diff_grad, score, score_grad
from fedmax.models import init_params, score_batch, score_grad_batch


def test_linear_score_and_grad(rng):
    spec = ScorerSpec.linear(4)
    w, x = rng.normal(size=4), rng.normal(size=4)
    assert score(spec, w, x) == pytest.approx(w @ x)
    np.testing.assert_array_equal(score_grad(spec, w, x), x)


def test_mlp1_matches_explicit_forward(rng):
    spec = ScorerSpec.mlp1(3, 2)
    w = rng.normal(size=spec.n_params)
    x = rng.normal(size=3)
    W1 = w[:6].reshape(2, 3)
    b1, w2, b2 = w[6:8], w[8:10], w[10]
    assert score(spec, w, x) == pytest.approx(np.tanh(W1 @ x + b1) @ w2 + b2, rel=1e-14)


@pytest.mark.parametrize("spec", [ScorerSpec.linear(6), ScorerSpec.mlp1(5, 4), ScorerSpec.mlp1(2, 7)])
def test_score_grad_matches_finite_differences(spec, rng):
    for _ in range(10):
        w = rng.normal(size=spec.n_params)
        x = rng.normal(size=spec.input_dim)
        fd = finite_diff_grad(lambda u: score(spec, u, x), w, h=1e-6)
        np.testing.assert_allclose(score_grad(spec, w, x), fd, rtol=1e-6, atol=1e-8)


def test_batch_agrees_with_single(rng):
    spec = ScorerSpec.mlp1(3, 4)
    w = rng.normal(size=spec.n_params)
    X = rng.normal(size=(6, 3))
    np.testing.assert_allclose(score_batch(spec, w, X), [score(spec, w, x) for x in X])
    np.testing.assert_allclose(score_grad_batch(spec, w, X), [score_grad(spec, w, x) for x in X])


def test_shape_errors():
    spec = ScorerSpec.linear(3)
    with pytest.raises(ShapeError):
        score(spec, np.zeros(2), np.zeros(3))
    with pytest.raises(ShapeError):
        score(spec, np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeError):
        ScorerSpec.mlp1(3, 0)
    with pytest.raises(ShapeError):
        ScorerSpec.linear(0)


def test_init_params():
    np.testing.assert_array_equal(init_params(ScorerSpec.linear(5), 3), np.zeros(5))
    spec = ScorerSpec.mlp1(4, 3)
    a, b = init_params(spec, 1), init_params(spec, 1)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (spec.n_params,)
    assert not np.array_equal(a, init_params(spec, 2))
