import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textexplain.metrics import (
    expand_position_attribution,
    infidelity,
    local_lipschitz,
    normalized_distance,
    summarize,
)
from textexplain.perturb import GaussianNoiseConfig, PerturbationConfig, PerturbedDoc, make_neighborhood

VOCAB = ["a", "b", "c", "d", "e"]


def bow(tokens):
    v = np.array([tokens.count(t) for t in VOCAB], dtype=float)
    return v / max(1, len(tokens))


def neighborhood_of(tokens, swaps):
    out = []
    for j, (p, t) in enumerate(swaps):
        new = list(tokens)
        new[p] = t
        out.append(PerturbedDoc(tuple(new), (p,), "doc", j))
    return out


DOC = ("a", "b", "c", "a", "d", "e", "b", "a")
NB = neighborhood_of(DOC, [(0, "b"), (2, "d"), (4, "e"), (5, "a"), (1, "c"), (7, "e")])


def test_constant_attribution_is_exactly_zero():
    r = local_lipschitz(lambda t: np.ones(5), bow, DOC, NB, eps=1.0)
    assert r.value == 0.0 and r.n_retained > 0


def test_homogeneity():
    W = np.random.default_rng(0).normal(size=(5, 5))
    phi = lambda t: np.tanh(W @ bow(t))  # noqa: E731
    base = local_lipschitz(phi, bow, DOC, NB, eps=1.0)
    for c in (3.7, -3.7, 0.01):
        scaled = local_lipschitz(lambda t, c=c: c * phi(t), bow, DOC, NB, eps=1.0)
        assert scaled.value == pytest.approx(abs(c) * base.value, rel=1e-9)
        assert scaled.argmax_draw == base.argmax_draw


def test_one_feature_linear_truth_gives_abs_w():
    w = -2.5
    rep = lambda t: np.array([t.count("a") / len(t)])  # noqa: E731
    r = local_lipschitz(lambda t: w * rep(t), rep, DOC, NB, eps=1.0)
    # brute force over the neighborhood
    xi = rep(DOC)
    ratios = [abs(w * (xi - rep(pd.tokens)))[0] / abs(xi - rep(pd.tokens))[0] for pd in NB if (rep(pd.tokens) != xi).any()]
    assert r.value == pytest.approx(abs(w)) and r.value == pytest.approx(max(ratios))


def test_radius_filter_and_identical_draws():
    same = PerturbedDoc(DOC, (), "doc", 0)
    r = local_lipschitz(lambda t: bow(t), bow, DOC, [same])
    assert r.empty and r.value is None and r.n_identical == 1
    far = neighborhood_of(DOC, [(0, "e")])
    d = normalized_distance(bow(DOC), bow(far[0].tokens))
    assert local_lipschitz(lambda t: bow(t), bow, DOC, far, eps=d * 0.999).empty
    assert not local_lipschitz(lambda t: bow(t), bow, DOC, far, eps=d).empty


def test_pi_zero_single_draw_neighborhood_is_empty(index):
    toks = tuple(t for t in index.tokens if t in index)[:20]
    nb = make_neighborhood(toks, index, PerturbationConfig(pi=0.0), m=1)
    r = local_lipschitz(lambda t: np.ones(3), lambda t: np.ones(3) * len(set(t)), toks, nb)
    assert r.empty and r.n_generated == 1


def test_length_change_rejected():
    bad = [PerturbedDoc(DOC[:-1], (), "doc", 0)]
    with pytest.raises(ValueError):
        local_lipschitz(bow, bow, DOC, bad)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_gradient_attribution_on_linear_model_has_zero_infidelity(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 30))
    w, b = rng.normal(size=d), rng.normal()
    x = rng.normal(size=d) * (rng.random(d) < 0.7)
    std = rng.random(d) * 3
    f = lambda X: X @ w + b  # noqa: E731
    noise = GaussianNoiseConfig(sigma_scale=float(rng.random()), n_draws=100, full_support=bool(rng.random() < 0.5))
    r = infidelity(f, w, x, noise, std, seed=seed)
    assert r.value <= 1e-12


def test_zero_attribution_infidelity_is_mean_output_change(rng):
    w = rng.normal(size=4)
    f = lambda X: np.tanh(X @ w)  # noqa: E731
    x, std = rng.random(4) + 0.1, np.ones(4)
    noise = GaussianNoiseConfig(n_draws=500)
    r = infidelity(f, np.zeros(4), x, noise, std, seed=3)
    from textexplain.perturb import gaussian_perturbations

    I = gaussian_perturbations(x, noise, std, seed=3)
    assert r.value == pytest.approx(np.mean((f(x[None]) - f(x[None] - I)) ** 2), rel=1e-12)
    assert r.value > 0


def test_infidelity_closed_form_two_features():
    w = np.array([1.5, -0.8])
    x = np.array([0.3, 2.0])
    std = np.array([1.0, 0.5])
    noise = GaussianNoiseConfig(sigma_scale=0.1, n_draws=10_000)
    sigma = 0.1 * std
    expected = float(np.sum(sigma**2 * w**2 * (x - 1) ** 2))
    r = infidelity(lambda X: X @ w, w * x, x, noise, std, seed=42)
    assert abs(r.value - expected) <= 3 * r.std_error


def test_expand_position_attribution_recovers_scores(rng):
    E = rng.normal(size=(6, 4))
    E[2] = 0.0
    s = rng.normal(size=6)
    X = expand_position_attribution(s, E)
    got = (X * E).sum(axis=1)
    assert np.allclose(got[[0, 1, 3, 4, 5]], s[[0, 1, 3, 4, 5]]) and np.all(X[2] == 0)


def test_summarize_skips_missing():
    s = summarize([1.0, None, 3.0, 2.0])
    assert s["n"] == 3 and s["median"] == 2.0 and s["mean"] == 2.0
    assert summarize([None])["median"] is None
