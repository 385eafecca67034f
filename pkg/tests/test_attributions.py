import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textexplain.attributions import (
    Attribution,
    exact_shapley,
    integrated_gradients,
    kernel_shap,
    lime,
    saliency,
    top_k,
    truth_additive,
    truth_linear,
)
from textexplain.embeddings import EmbeddingTable
from textexplain.models import AdditiveBoostingClassifier, EmbeddingBagClassifier, LogisticRegressionGD


def linear_fn(w, b=0.0):
    w = np.asarray(w, dtype=float)
    return lambda X: np.atleast_2d(X) @ w + b


def random_additive(rng, d, n_bins=4):
    edges = [np.sort(rng.choice(np.linspace(0.05, 0.95, 19), n_bins - 1, replace=False)) for _ in range(d)]
    scores = [rng.normal(size=n_bins) for _ in range(d)]
    return AdditiveBoostingClassifier.from_shapes(edges, scores, intercept=rng.normal())


# truth

def test_truth_linear_examples(rng):
    m = LogisticRegressionGD.from_weights([2.0, -1.0])
    assert np.allclose(truth_linear(m, [0.5, 0.5]).scores, [1.0, -0.5])
    assert np.all(truth_linear(m, [0.0, 0.0]).scores == 0)
    w = rng.normal(size=30)
    x = rng.random(30) * (rng.random(30) < 0.4)
    a = truth_linear(LogisticRegressionGD.from_weights(w), x)
    oracle = sorted(range(30), key=lambda i: (-abs(w[i] * x[i]), i))[:8]
    assert top_k(a.scores, 8) == oracle


def test_truth_additive_sum_identity(rng):
    for _ in range(20):
        m = random_additive(rng, 6)
        x = rng.random(6)
        a = truth_additive(m, x)
        assert abs(a.scores.sum() + m.intercept_ - m.decision_function(x[None])[0]) <= 1e-12
    zero = AdditiveBoostingClassifier.from_shapes([np.array([0.5])] * 3, [np.zeros(2)] * 3)
    assert np.all(truth_additive(zero, rng.random(3)).scores == 0)


def test_truth_additive_trained_single_feature(rng):
    X = rng.random((500, 6))
    y = (X[:, 3] > 0.5).astype(int)
    m = AdditiveBoostingClassifier(n_bins=8, rounds=30, lr=0.2).fit(X, y)
    for x in X[np.abs(X[:, 3] - 0.5) > 0.3][:20]:
        assert int(np.argmax(np.abs(truth_additive(m, x).scores))) == 3


# LIME

def lime_oracle(f, x, kernel_width, alpha):
    """Dense augmented least squares over all 2^m masks (independent construction)."""
    active = [i for i in range(x.size) if x[i] != 0]
    m = len(active)
    Z, Y, W = [], [], []
    for bits in itertools.product([0, 1], repeat=m):
        z = np.array(bits[::-1], dtype=float)
        v = np.zeros_like(x)
        for j, i in enumerate(active):
            v[i] = x[i] * z[j]
        n = np.linalg.norm(v)
        if n > 0:
            v = v / n
            cos = v @ x / np.linalg.norm(x)
        else:
            cos = 0.0
        Z.append(z)
        Y.append(f(v[None])[0])
        W.append(math.exp(-((1 - cos) ** 2) / kernel_width**2))
    Z, Y, W = np.array(Z), np.array(Y), np.array(W)
    A = np.hstack([np.ones((len(Z), 1)), Z]) * np.sqrt(W)[:, None]
    reg = np.hstack([np.zeros((m, 1)), math.sqrt(alpha) * np.eye(m)])
    sol, *_ = np.linalg.lstsq(np.vstack([A, reg]), np.concatenate([Y * np.sqrt(W), np.zeros(m)]), rcond=None)
    out = np.zeros_like(x)
    out[active] = sol[1:]
    return out


def test_lime_matches_dense_oracle(rng):
    x = np.zeros(12)
    x[[1, 4, 5, 8, 11]] = rng.random(5) + 0.1
    w = rng.normal(size=12)
    f = linear_fn(w, 0.2)
    a = lime(f, x, n_samples=32, exhaustive=True)
    assert a.metadata["exhaustive"]
    assert np.allclose(a.scores, lime_oracle(f, x, 0.75, 1e-3), atol=1e-6)


def test_lime_constant_model_gives_zero(rng):
    x = rng.random(6)
    a = lime(lambda X: np.full(len(X), 3.0), x, n_samples=200)
    assert np.allclose(a.scores, 0.0, atol=1e-12)


def test_lime_single_feature_sign():
    for wi in (2.5, -1.5):
        w = np.array([0.0, wi, 0.0])
        f = lambda X, w=w: 1 / (1 + np.exp(-(np.atleast_2d(X) @ w)))  # noqa: E731
        a = lime(f, np.array([0.0, 0.7, 0.0]), n_samples=2)
        assert np.sign(a.scores[1]) == np.sign(wi)


def test_lime_reports_only_top_features(rng):
    x = rng.random(20) + 0.1
    a = lime(linear_fn(rng.normal(size=20)), x, n_samples=300, n_report_features=4, seed=1)
    assert np.count_nonzero(a.scores) == 4
    assert 0.0 <= a.metadata["surrogate_r2"] <= 1.0


def test_lime_seeded():
    x = np.linspace(0.1, 1, 25)
    f = linear_fn(np.sin(np.arange(25)))
    assert np.array_equal(lime(f, x, seed=3).scores, lime(f, x, seed=3).scores)


# kernel SHAP / exact Shapley

def test_exact_shapley_three_feature_linear(rng):
    w, x, bg = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    f = linear_fn(w, 1.0)
    # hand enumeration of all 8 coalitions
    ref = np.zeros(3)
    for i in range(3):
        others = [j for j in range(3) if j != i]
        for r in range(3):
            for S in itertools.combinations(others, r):
                weight = math.factorial(len(S)) * math.factorial(2 - len(S)) / 6
                z = bg.copy()
                z[list(S)] = x[list(S)]
                zi = z.copy()
                zi[i] = x[i]
                ref[i] += weight * (f(zi)[0] - f(z)[0])
    a = exact_shapley(f, x, bg)
    assert np.allclose(a.scores, ref, atol=1e-12)
    assert np.allclose(a.scores, w * (x - bg), atol=1e-12)


def test_exact_shapley_axioms(rng):
    sym = lambda X: np.atleast_2d(X)[:, 0] * np.atleast_2d(X)[:, 1] + np.atleast_2d(X)[:, 2]  # noqa: E731
    a = exact_shapley(sym, np.array([0.6, 0.6, 0.3]))
    assert a.scores[0] == pytest.approx(a.scores[1], abs=1e-14)
    f = linear_fn([0.0, 1.0, 2.0])
    x = np.array([0.0, 0.4, 0.0])
    assert exact_shapley(f, x).scores.tolist() == pytest.approx([0.0, 0.4, 0.0])
    with pytest.raises(ValueError):
        exact_shapley(f, np.ones(16), max_features=15)


@pytest.mark.parametrize("kind", ["linear", "additive", "interaction"])
def test_kernel_shap_enumeration_equals_exact(kind, rng):
    for trial in range(5):
        d = 12
        m = int(rng.integers(2, 13))
        x = np.zeros(d)
        x[rng.choice(d, m, replace=False)] = rng.random(m) + 0.05
        if kind == "linear":
            f = linear_fn(rng.normal(size=d), 0.3)
        elif kind == "additive":
            f = random_additive(rng, d).decision_function
        else:
            W = rng.normal(size=(d, d))
            f = lambda X, W=W: np.einsum("ni,ij,nj->n", np.atleast_2d(X), W, np.atleast_2d(X))  # noqa: E731
        ks = kernel_shap(f, x, n_samples=2**m, exhaustive=True)
        ex = exact_shapley(f, x)
        assert np.max(np.abs(ks.scores - ex.scores)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40), st.integers(2, 300), st.booleans())
def test_kernel_shap_efficiency_always_exact(seed, m, n_samples, nonzero_bg):
    rng = np.random.default_rng(seed)
    d = m + 3
    x = np.zeros(d)
    x[:m] = rng.random(m) + 0.1
    bg = rng.random(d) * 0.05 if nonzero_bg else None
    W = rng.normal(size=(d, d)) / d
    f = lambda X: np.tanh(np.einsum("ni,ij,nj->n", np.atleast_2d(X), W, np.atleast_2d(X)) + np.atleast_2d(X).sum(1))  # noqa: E731
    a = kernel_shap(f, x, n_samples=n_samples, background=bg, seed=seed)
    gap = a.scores.sum() - (a.metadata["f_x"] - a.metadata["f_background"])
    assert abs(gap) <= 1e-10


def test_kernel_shap_dummy_and_degenerate_cases(rng):
    w = rng.normal(size=8)
    w[2] = 0.0
    x = rng.random(8) + 0.1
    a = kernel_shap(linear_fn(w), x, n_samples=1000, seed=0)
    assert abs(a.scores[2]) <= 1e-8
    assert np.all(kernel_shap(linear_fn(w), x, background=x).scores == 0)
    one = np.zeros(8)
    one[5] = 0.7
    a = kernel_shap(linear_fn(w, 2.0), one)
    assert a.scores[5] == pytest.approx(w[5] * 0.7) and np.count_nonzero(a.scores) == 1


def test_kernel_shap_sampling_converges_on_linear(rng):
    w = rng.normal(size=40)
    x = rng.random(40)
    a = kernel_shap(linear_fn(w), x, n_samples=4000, seed=2)
    assert np.allclose(a.scores, w * x, atol=1e-8)  # linear games are recovered exactly by any full-rank design


# gradient methods

@pytest.fixture
def emb():
    rng = np.random.default_rng(8)
    table = EmbeddingTable(tuple("abcdefg"), rng.normal(size=(7, 4)))
    return EmbeddingBagClassifier.from_parts(table, rng.normal(size=4), -0.2)


def test_saliency_mean_pooling_and_finite_differences(emb):
    toks = ["a", "c", "c", "f", "g"]
    s = saliency(emb, toks)
    assert np.allclose(s.scores, np.linalg.norm(emb.coef_) / 5)
    E = emb.embed(toks)
    h = 1e-6
    for p in range(len(toks)):
        g = np.zeros(4)
        for k in range(4):
            Ep, Em = E.copy(), E.copy()
            Ep[p, k] += h
            Em[p, k] -= h
            g[k] = (emb.logit_from_embeddings(Ep) - emb.logit_from_embeddings(Em)) / (2 * h)
        assert s.scores[p] == pytest.approx(np.linalg.norm(g), rel=1e-4)
    zero = EmbeddingBagClassifier.from_parts(emb.embedding_table(), np.zeros(4))
    assert np.all(saliency(zero, toks).scores == 0)


@pytest.mark.parametrize("steps", [8, 9, 32, 100])
def test_ig_completeness(emb, steps):
    a = integrated_gradients(emb, ["a", "b", "g", "zz"], steps=steps)
    assert a.metadata["completeness_residual"] <= 1e-6
    assert a.scores[3] == 0.0


def test_ig_linearity_and_baseline(emb):
    toks = ["a", "b", "c"]
    base = integrated_gradients(emb, toks).scores
    table = emb.embedding_table()
    M = table.matrix.copy()
    M[0] *= 2
    doubled = EmbeddingBagClassifier.from_parts(EmbeddingTable(table.tokens, M), emb.coef_, emb.intercept_)
    assert integrated_gradients(doubled, toks).scores[0] == pytest.approx(2 * base[0], rel=1e-12)
    E = emb.embed(toks)
    B = E.copy()
    B[1] = 0.0
    a = integrated_gradients(emb, toks, baseline=B)
    assert a.scores[0] == 0.0 and a.scores[2] == 0.0
    with pytest.raises(ValueError):
        integrated_gradients(emb, toks, steps=4)


def test_attribution_json_roundtrip(rng):
    a = Attribution("feature", np.array([0.0, 1.5, 0.0, -2.0]), "lime", "LR", "logit", {"seed": 1})
    back = Attribution.from_json(a.to_json())
    assert np.array_equal(back.scores, a.scores) and back.method == "lime"
    assert np.array_equal(a.scaled(3.7).scores, a.scores * 3.7)
