import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textexplain.embeddings import (
    EmbeddingFormatError,
    EmbeddingTable,
    build_neighbor_index,
    cooccurrence_matrix,
    load_embeddings,
    ppmi,
    save_embeddings,
    train_embeddings,
)


def write(tmp_path, text):
    p = tmp_path / "e.txt"
    p.write_text(text)
    return p


def test_load_well_formed(tmp_path):
    t = load_embeddings(write(tmp_path, "2 3\na 1 2 3\nb 0 0 1.5\n"))
    assert t.tokens == ("a", "b") and t.dim == 3
    assert np.array_equal(t.vector("b"), [0, 0, 1.5])


def test_load_dimension_mismatch_names_line(tmp_path):
    with pytest.raises(EmbeddingFormatError, match=r":3: token 'b' has 2 values, expected 3"):
        load_embeddings(write(tmp_path, "2 3\na 1 2 3\nb 1 2\n"))


def test_load_duplicate_token(tmp_path):
    text = "5 1\nx 1\na 1\nb 2\nc 3\nx 4\n"
    with pytest.raises(EmbeddingFormatError, match=r":6: duplicate token 'x' \(first on line 2\)"):
        load_embeddings(write(tmp_path, text))


def test_load_bad_header(tmp_path):
    with pytest.raises(EmbeddingFormatError, match=":1:"):
        load_embeddings(write(tmp_path, "two 3\n"))


def test_save_load_roundtrip_is_exact(tmp_path, rng):
    t = EmbeddingTable(("a", "b", "c"), rng.normal(size=(3, 4)))
    p = tmp_path / "t.txt"
    save_embeddings(t, p)
    assert np.array_equal(load_embeddings(p).matrix, t.matrix)


def test_vocabulary_report(tmp_path):
    t = load_embeddings(write(tmp_path, "2 1\na 1\nzz 2\n"), vocabulary={"a"})
    assert t.report["not_in_vocabulary"] == ["zz"]


def test_ppmi_hand_values():
    toks, C = cooccurrence_matrix([["a", "b"], ["a", "b"], ["c", "d"]], window=1)
    assert toks == ["a", "b", "c", "d"]
    M = ppmi(C)
    # total 6; row sums a=b=2, c=d=1
    assert M[0, 1] == pytest.approx(math.log(2 * 6 / (2 * 2)))
    assert M[2, 3] == pytest.approx(math.log(6))
    assert M[0, 2] == 0.0 and M[0, 0] == 0.0


def eig_oracle(M):
    lam, V = np.linalg.eigh(M)
    return V * np.sqrt(np.abs(lam))


def test_cooccurring_tokens_are_closer_than_unrelated():
    corpus = [["a", "b", "x"], ["b", "a", "y"], ["a", "b", "x"], ["c", "z", "y"], ["z", "c", "x"]]
    t = train_embeddings(corpus, dim=6, window=1)
    d = lambda u, v: np.linalg.norm(t.vector(u) - t.vector(v))  # noqa: E731
    assert d("a", "b") < d("a", "c")
    # full-rank geometry agrees with a plain eigendecomposition of the PPMI matrix
    toks, C = cooccurrence_matrix(corpus, 1)
    E = eig_oracle(ppmi(C))
    ref = {tok: E[i] for i, tok in enumerate(toks)}
    for u, v in [("a", "b"), ("a", "c"), ("x", "y")]:
        assert d(u, v) == pytest.approx(np.linalg.norm(ref[u] - ref[v]), rel=1e-9)


def test_zero_cooccurrence_token_excluded_from_index():
    with pytest.warns(UserWarning):
        t = train_embeddings([["solo"]], dim=1, window=2)
    assert np.all(t.matrix == 0)
    t = train_embeddings([["a", "b", "c"], ["lonely"]], dim=2, window=1)
    assert np.all(t.vector("lonely") == 0)
    idx = build_neighbor_index(t, k=5)
    assert "lonely" not in idx
    assert "lonely" not in idx.neighbors("a")


def test_training_is_bitwise_deterministic(small_corpus):
    a = train_embeddings(small_corpus[:80], dim=10)
    b = train_embeddings(small_corpus[:80], dim=10)
    assert a.tokens == b.tokens and np.array_equal(a.matrix, b.matrix)


def test_neighbor_example_on_a_line():
    t = EmbeddingTable(("t0", "t1", "t2"), np.array([[0.0], [1.0], [10.0]]) + np.array([[1.0]]))
    idx = build_neighbor_index(t, k=1)
    assert idx.neighbors("t0") == ["t1"]
    assert idx.neighbors("t1") == ["t0"]
    assert idx.neighbors("t2") == ["t1"]


def test_large_k_lists_everything_and_identical_vectors():
    t = EmbeddingTable(("a", "b", "c"), np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 5.0]]))
    idx = build_neighbor_index(t, k=10)
    for tok in t.tokens:
        assert set(idx.neighbors(tok)) == set(t.tokens) - {tok}
    assert idx.neighbors("a")[0] == "b" and idx.neighbor_dists[0][0] == 0.0
    assert idx.neighbors("b")[0] == "a"


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 25), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31))
def test_index_matches_brute_force_sort(V, dim, k, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(V, dim)).round(1) + 0.05  # rounding creates ties, offset avoids zero rows
    M[np.all(M == 0, axis=1)] = 1.0
    t = EmbeddingTable(tuple(f"w{i}" for i in range(V)), M)
    idx = build_neighbor_index(t, k=k, chunk_elems=7)
    for i in range(V):
        dist = [(math.dist(M[i], M[j]), j) for j in range(V) if j != i]
        expected = [j for _, j in sorted(dist)[: min(k, V - 1)]]
        got = list(idx.neighbor_ids[i])
        # equal up to floating ties: compare the distance sequence, and the ids where distances differ
        assert np.allclose(sorted(d for d, _ in dist)[: len(got)], idx.neighbor_dists[i])
        strict = [j for j in expected if sum(abs(d - math.dist(M[i], M[j])) < 1e-12 for d, _ in dist) == 1]
        assert set(strict) <= set(got)
        assert i not in got


def test_synthetic_neighbors_are_semantic(index):
    assert "heart" in index
    from textexplain.synthetic import SHARED_TOPICS

    cardiac = set(SHARED_TOPICS["cardiac"])
    assert len(set(index.neighbors("heart")[:5]) & cardiac) >= 3
