import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from textexplain.perturb import (
    GaussianNoiseConfig,
    PerturbationConfig,
    derive_seed,
    gaussian_perturbations,
    in_neighbor_lists,
    make_neighborhood,
    perturb_document,
)
from textexplain.text import Document


def indexed_doc(index, n, seed=0):
    toks = [t for t in index.tokens if t in index]
    rng = np.random.default_rng(seed)
    return Document("d", 0, tuple(rng.choice(toks, size=n)))


def test_pi_zero_is_identity(index):
    doc = indexed_doc(index, 50)
    pd = perturb_document(doc, index, PerturbationConfig(pi=0.0))
    assert pd.tokens == doc.tokens and pd.replaced_positions == ()
    nb = make_neighborhood(doc, index, PerturbationConfig(pi=0.0), m=1)
    assert len(nb) == 1 and nb[0].tokens == doc.tokens


def test_pi_one_replaces_every_indexed_position(index):
    doc = Document("d", 1, indexed_doc(index, 40).tokens + ("not-in-index",))
    pd = perturb_document(doc, index, PerturbationConfig(pi=1.0, k=10), seed=4)
    assert pd.replaced_positions == tuple(range(40))
    assert pd.n_out_of_index == 1 and pd.tokens[-1] == "not-in-index"
    assert in_neighbor_lists(doc.tokens, pd, index, 10)


def test_replaced_fraction_binomial_bound(index):
    doc = indexed_doc(index, 1000, seed=1)
    cfg = PerturbationConfig(pi=0.1, k=10, seed=77)
    nb = make_neighborhood(doc, index, cfg, m=10)
    n_replaced = sum(len(pd.replaced_positions) for pd in nb)
    assert 0.08 <= n_replaced / 10_000 <= 0.12
    assert all(in_neighbor_lists(doc.tokens, pd, index, 10) for pd in nb)


def test_neighborhood_draws_distinct_and_deterministic(index):
    doc = indexed_doc(index, 200, seed=2)
    cfg = PerturbationConfig(seed=5)
    a = make_neighborhood(doc, index, cfg, m=15)
    b = make_neighborhood(doc, index, cfg, m=15)
    assert a == b
    assert len({pd.tokens for pd in a}) == 15
    assert [pd.draw for pd in a] == list(range(15))
    assert perturb_document(doc, index, cfg, seed=derive_seed(5, "d", 3), draw=3) == a[3]


def test_duplicates_are_flagged(index):
    doc = indexed_doc(index, 2, seed=3)
    nb = make_neighborhood(doc, index, PerturbationConfig(pi=0.05, seed=1), m=15)
    seen = set()
    for pd in nb:
        assert pd.duplicate == (pd.tokens in seen)
        seen.add(pd.tokens)
    assert any(pd.duplicate for pd in nb)


def test_excluded_tokens_never_replaced(index):
    doc = indexed_doc(index, 30)
    cfg = PerturbationConfig(pi=1.0, exclude={doc.tokens[0]})
    pd = perturb_document(doc, index, cfg)
    assert all(doc.tokens[p] != doc.tokens[0] for p in pd.replaced_positions)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(1, 10), st.integers(0, 2**40), st.integers(1, 60))
def test_perturbation_invariants(index, pi, k, seed, n):
    doc = indexed_doc(index, n, seed=seed % 1000)
    pd = perturb_document(doc, index, PerturbationConfig(pi=pi, k=k, seed=seed))
    assert len(pd.tokens) == len(doc.tokens)
    assert in_neighbor_lists(doc.tokens, pd, index, k)
    changed = {p for p, (a, b) in enumerate(zip(doc.tokens, pd.tokens)) if a != b}
    assert changed <= set(pd.replaced_positions)


def test_derive_seed_is_stable():
    assert derive_seed(1, "doc", 2) == derive_seed(1, "doc", 2)
    assert derive_seed(1, "doc", 2) != derive_seed(1, "doc", 3)
    assert derive_seed(0, "x") == 4755882605482474953  # fixed across processes and platforms


def test_gaussian_noise_zero_scale():
    I = gaussian_perturbations(np.ones(5), GaussianNoiseConfig(sigma_scale=0.0, n_draws=10), np.ones(5))
    assert I.shape == (10, 5) and np.all(I == 0)


def test_gaussian_noise_moments():
    std = np.array([0.5, 1.0, 2.0, 4.0])
    cfg = GaussianNoiseConfig(sigma_scale=0.1, n_draws=10_000)
    I = gaussian_perturbations(np.ones(4), cfg, std, seed=11)
    target = 0.1 * std
    assert np.all(np.abs(I.mean(axis=0)) <= 4 * target / np.sqrt(10_000))
    assert np.all(np.abs(I.std(axis=0, ddof=1) / target - 1) <= 0.05)


def test_gaussian_noise_support():
    x = np.array([0.0, 1.0, 0.0, 2.0])
    I = gaussian_perturbations(x, GaussianNoiseConfig(n_draws=50), np.ones(4), seed=0)
    assert np.all(I[:, [0, 2]] == 0) and np.all(I[:, [1, 3]] != 0)
    I = gaussian_perturbations(x, GaussianNoiseConfig(n_draws=50, full_support=True), np.ones(4), seed=0)
    assert np.all(I != 0)
