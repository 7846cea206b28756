import math
from collections import Counter
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valuealign.core import Codebook, ValueCode, ValueExpression, shannon_entropy
from valuealign.recognizer import (
    DEFAULT_SIGMA, NoValueContent, RecognizerParams, corpus_histogram, document_distribution,
    estimate_sigma, ordered_set_probabilities, params_for, sample_code_set, soft_assign,
    without_replacement_entropy,
)


def codebook_from(centroids, members=None):
    codes = []
    for k, c in enumerate(np.asarray(centroids, dtype=float)):
        mem = members[k] if members else [ValueExpression(f"m{k}", embedding=c)]
        codes.append(ValueCode(k, f"code {k}", c, mem))
    return Codebook(codes)


def expr(v):
    return ValueExpression("x", embedding=np.asarray(v, dtype=float))


def softmax_oracle(z):
    e = [math.exp(v) for v in z]
    s = sum(e)
    return [v / s for v in e]


def test_params_guard():
    with pytest.raises(ValueError):
        RecognizerParams(sigma2=0)
    with pytest.raises(ValueError):
        RecognizerParams(min_code_prob=1.0)


# -- sigma -----------------------------------------------------------------

def test_sigma_singletons_default():
    assert estimate_sigma(codebook_from(np.eye(3))) == pytest.approx(DEFAULT_SIGMA, abs=1e-15)


def test_sigma_zero_spread_falls_back():
    c = np.array([1.0, 0.0])
    cb = codebook_from([c], [[ValueExpression("a", embedding=c), ValueExpression("b", embedding=c)]])
    assert estimate_sigma(cb) == pytest.approx(DEFAULT_SIGMA, abs=1e-15)


def _fan(c1, c2):
    pts = []
    for c in (c1, c2):
        s = math.sqrt(1 - c * c)
        pts += [np.array([c, s, 0.0]), np.array([c, -s, 0.0])]
    return [ValueExpression(f"p{i}", embedding=p) for i, p in enumerate(pts)]


def test_sigma_arithmetic_mean():
    # member cosines {c1, c1, c2, c2} to the x-axis centroid: population std |c1 - c2| / 2
    m1, m2 = _fan(0.9, 0.8), _fan(0.9, 0.6)
    codes = []
    for k, mem in enumerate((m1, m2)):
        code = ValueCode(k, str(k), np.zeros(3), mem)
        code.recompute_centroid()
        codes.append(code)
    assert estimate_sigma(Codebook(codes)) == pytest.approx(0.10, abs=1e-12)


def test_sigma_empty_codebook():
    with pytest.raises(ValueError):
        estimate_sigma(Codebook([]))


def test_params_for_uses_stored_sigma():
    cb = codebook_from(np.eye(2))
    cb.sigma = 0.2
    assert params_for(cb).sigma2 == pytest.approx(0.04)


# -- soft assignment -------------------------------------------------------

def test_soft_assign_examples():
    cb = codebook_from(np.eye(3))
    p = soft_assign(expr([1, 0, 0]), cb, RecognizerParams(sigma2=1.0))
    np.testing.assert_allclose(p, [0.576117, 0.211942, 0.211942], atol=1e-6)

    cb = codebook_from([[0.9, math.sqrt(1 - 0.81)], [0.3, math.sqrt(1 - 0.09)]])
    p = soft_assign(expr([1, 0]), cb, RecognizerParams(sigma2=0.25))
    np.testing.assert_allclose(p, softmax_oracle([3.6, 1.2]), atol=1e-12)
    np.testing.assert_allclose(p, [0.916827, 0.083173], atol=1e-6)


def test_soft_assign_equal_sims_uniform():
    cb = codebook_from(np.eye(4))
    p = soft_assign(expr([1, 1, 1, 1]), cb, RecognizerParams())
    np.testing.assert_allclose(p, 0.25, atol=1e-15)


def test_soft_assign_guards():
    cb = codebook_from(np.eye(3))
    with pytest.raises(ValueError):
        soft_assign(expr([1, 0]), cb, RecognizerParams())
    with pytest.raises(ValueError):
        soft_assign(ValueExpression("x"), cb, RecognizerParams())
    with pytest.raises(ValueError):
        soft_assign(expr([1, 0, 0]), Codebook([]), RecognizerParams())


def test_document_distribution_examples():
    rng = np.random.default_rng(0)
    C = rng.normal(size=(5, 8))
    cb = codebook_from(C)
    params = RecognizerParams(sigma2=0.3)
    rows = [expr(rng.normal(size=8)) for _ in range(3)]
    np.testing.assert_allclose(document_distribution(rows[:1], cb, params), soft_assign(rows[0], cb, params))
    oracle = sum(soft_assign(r, cb, params) for r in rows) / 3
    np.testing.assert_allclose(document_distribution(rows, cb, params), oracle, atol=1e-15)
    with pytest.raises(NoValueContent, match="no value content"):
        document_distribution([], cb, params)


def test_document_distribution_symmetric_rows():
    cb = codebook_from(np.eye(2))
    # sigma2 tiny makes rows one-hot
    d = document_distribution([expr([1, 0]), expr([0, 1])], cb, RecognizerParams(sigma2=1e-4))
    np.testing.assert_allclose(d, [0.5, 0.5], atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 6),
       st.floats(1e-3, 5.0))
@settings(max_examples=100, deadline=None)
def test_outputs_are_distributions(seed, K, n, sigma2):
    rng = np.random.default_rng(seed)
    cb = codebook_from(rng.normal(size=(K, 6)))
    params = RecognizerParams(sigma2=sigma2)
    rows = [expr(rng.normal(size=6)) for _ in range(n)]
    for p in [soft_assign(rows[0], cb, params), document_distribution(rows, cb, params)]:
        assert abs(p.sum() - 1) <= 1e-9 and np.all(p >= 0)


def test_temperature_limit():
    rng = np.random.default_rng(1)
    for _ in range(50):
        C = rng.normal(size=(6, 5))
        e = rng.normal(size=5)
        sims = C @ e / (np.linalg.norm(C, axis=1) * np.linalg.norm(e))
        p = soft_assign(expr(e), codebook_from(C), RecognizerParams(sigma2=1e-4))
        assert int(np.argmax(p)) == int(np.argmax(sims))


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    C = rng.normal(size=(7, 4))
    e = expr(rng.normal(size=4))
    perm = rng.permutation(7)
    params = RecognizerParams(sigma2=0.2)
    np.testing.assert_allclose(soft_assign(e, codebook_from(C[perm]), params),
                               soft_assign(e, codebook_from(C), params)[perm], atol=1e-15)


# -- corpus histogram ------------------------------------------------------

def test_corpus_histogram_examples():
    np.testing.assert_allclose(corpus_histogram([[0.2, 0.8]]).mass, [0.2, 0.8])
    np.testing.assert_allclose(corpus_histogram([[1, 0], [0, 1]]).mass, [0.5, 0.5])
    rng = np.random.default_rng(3)
    D = rng.dirichlet(np.ones(6), size=10)
    oracle = [sum(D[i, k] for i in range(10)) / 10 for k in range(6)]
    np.testing.assert_allclose(corpus_histogram(D).mass, oracle, atol=1e-12)
    with pytest.raises(ValueError):
        corpus_histogram(np.zeros((0, 3)))


def test_corpus_histogram_topic_weighted():
    D = [[1, 0], [1, 0], [0, 1]]
    np.testing.assert_allclose(corpus_histogram(D).mass, [2 / 3, 1 / 3])
    np.testing.assert_allclose(corpus_histogram(D, ["a", "a", "b"], topic_weighted=True).mass, [0.5, 0.5])
    with pytest.raises(ValueError):
        corpus_histogram(D, ["a"], topic_weighted=True)


# -- sampling --------------------------------------------------------------

def test_sample_delta():
    s = sample_code_set([0, 0, 0, 1.0, 0], 1, np.random.default_rng(0))
    assert s.indices == (3,) and s.prob == 1.0 and not s.truncated


def test_sample_exhaustion():
    s = sample_code_set(np.full(5, 0.2), 5, np.random.default_rng(0))
    assert sorted(s.indices) == [0, 1, 2, 3, 4]
    assert s.prob == pytest.approx(1 / 120)


def test_sample_floor_and_truncation():
    s = sample_code_set([0.995, 0.005], 2, np.random.default_rng(0))
    assert s.indices == (0,) and s.truncated


def test_sample_frequencies_match_enumeration():
    dist = np.array([0.7, 0.2, 0.1])
    rng = np.random.default_rng(4)
    n = 100_000
    counts = Counter(sample_code_set(dist, 2, rng).indices for _ in range(n))
    tuples, probs = ordered_set_probabilities(dist, 2)
    for t, p in zip(map(tuple, tuples), probs):
        assert abs(counts[t] / n - p) <= 0.02


def test_ordered_probabilities_vs_brute_force():
    rng = np.random.default_rng(5)
    p = rng.dirichlet(np.ones(5))
    tuples, probs = ordered_set_probabilities(p, 3)
    got = {tuple(t): q for t, q in zip(tuples.tolist(), probs)}
    for perm in permutations(range(5), 3):
        q, used = 1.0, 0.0
        for k in perm:
            q *= p[k] / (1 - used)
            used += p[k]
        assert got[perm] == pytest.approx(q, abs=1e-15)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_without_replacement_entropy_limits():
    # M = 1 is the plain entropy; uniform M-tuples have entropy log(K!/(K-M)!)
    p = np.random.default_rng(6).dirichlet(np.ones(6))
    assert without_replacement_entropy(p, 1) == pytest.approx(shannon_entropy(p), abs=1e-12)
    assert without_replacement_entropy(np.full(6, 1 / 6), 3) == pytest.approx(math.log(120), abs=1e-12)
