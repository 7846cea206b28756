import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valuealign.codebook import (
    DistortionRecord, OptimizationError, OptimizerConfig, ScoreBreakdown, codebook_from_dict,
    codebook_to_dict, distortion, init_codebook, load_checkpoint, optimize, reconstruction_step,
    refine_step, relative_improvement, save_checkpoint, usage_zscores,
)
from valuealign.codebook.checkpoint import iteration_checkpoints
from valuealign.core import CodeIndexSet, Codebook, Document, ValueCode, ValueExpression
from valuealign.gateway import mock_gateway
from valuealign.pipeline import extract_corpus, embed_expressions
from valuealign.synthetic import planted_corpus, planted_world

import oracles
from conftest import anchored_world, planted_expressions, scripted_gateway


def groups_of(codebook, exprs):
    index = {id(e): i for i, e in enumerate(exprs)}
    return [[index[id(m)] for m in c.members] for c in codebook.codes]


def small_corpus(seed=0, n_docs=20, n_codes=6):
    world = planted_world(n_codes=n_codes, seed=seed)
    gw = mock_gateway(world)
    corpus = planted_corpus(world, "A", n_docs, codes_per_doc=2, seed=seed)
    exprs = extract_corpus(corpus.documents, gw)
    embed_expressions(exprs, gw)
    return corpus.documents, exprs, gw


# -- config ----------------------------------------------------------------

def test_config_guards_and_roundtrip():
    with pytest.raises(ValueError):
        OptimizerConfig(N1=0)
    with pytest.raises(ValueError):
        OptimizerConfig(tau2=0)
    with pytest.raises(ValueError):
        OptimizerConfig(global_entropy_sign=0)
    with pytest.raises(ValueError, match="unknown"):
        OptimizerConfig.from_dict({"N3": 1})
    cfg = OptimizerConfig(T=4)
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg


def test_score_breakdown_recomposes():
    cfg = OptimizerConfig(beta1=0.3, beta2=0.08, M=3)
    s = ScoreBreakdown.compose(-0.7, 1.2, 2.0, cfg)
    assert s.total == pytest.approx(-(-0.7 - 0.3 * 3 * 1.2) - 0.08 * 3 * 2.0, abs=1e-12)
    assert abs(s.total - s.recomposed()) <= 1e-12


# -- initialisation --------------------------------------------------------

def test_init_recovers_separated_clusters():
    world = planted_world(n_codes=6, seed=1)
    exprs, labels = planted_expressions(world, 50, [0, 1, 2])
    cb = init_codebook(exprs, OptimizerConfig(), mock_gateway(world))
    assert cb.K == 3
    groups = groups_of(cb, exprs)
    assert oracles.purity(groups, labels) == 1.0
    assert sorted(c.name for c in cb.codes) == sorted(world.codes[k].name for k in range(3))


def test_init_merges_close_clusters():
    a = np.zeros(16)
    a[0] = 1.0
    b = np.zeros(16)
    b[0], b[1] = 0.95, np.sqrt(1 - 0.95 ** 2)
    world = anchored_world(np.stack([a, b]), noise=0.05)
    exprs, _ = planted_expressions(world, 30, [0, 1])
    cb = init_codebook(exprs, OptimizerConfig(), mock_gateway(world))
    assert cb.K == 1 and len(cb.codes[0].members) == 60


def test_init_too_few_points_gives_singletons():
    world = planted_world(n_codes=6, seed=2)
    exprs, _ = planted_expressions(world, 1, [0, 1, 2, 3])
    cb = init_codebook(exprs, OptimizerConfig(min_cluster_size=5), mock_gateway(world))
    assert 1 <= cb.K <= 4
    assert cb.n_members() == 4


def test_init_empty():
    with pytest.raises(ValueError):
        init_codebook([], OptimizerConfig(), None)


def test_init_centroids_in_full_dimension():
    world = planted_world(n_codes=4, seed=3)
    exprs, _ = planted_expressions(world, 20, [0, 1])
    cb = init_codebook(exprs, OptimizerConfig(), mock_gateway(world))
    for c in cb.codes:
        assert c.centroid.shape == (world.dim,)
        np.testing.assert_allclose(c.centroid, np.mean([m.embedding for m in c.members], axis=0), atol=1e-12)


def test_init_uses_pluggable_reducer():
    world = planted_world(n_codes=4, seed=4)
    exprs, _ = planted_expressions(world, 20, [0, 1])
    seen = {}

    def identity(X, dim):
        seen["shape"] = X.shape
        return X

    init_codebook(exprs, OptimizerConfig(), mock_gateway(world), reducer=identity)
    assert seen["shape"] == (40, world.dim)


# -- distortion --------------------------------------------------------------

def _distortion_setup(cosines):
    table = {"DOC": [1.0, 0.0]}
    for j, c in enumerate(cosines):
        table[f"R{j}"] = [c, float(np.sqrt(1 - c * c))]
    gw = scripted_gateway(lambda r: f"R{r.sample_index}", table)
    cb = Codebook([ValueCode(0, "Honesty", np.array([1.0, 0.0]), [ValueExpression("x", embedding=np.array([1.0, 0.0]))])])
    doc = Document("d", "t", "A", "DOC")
    return doc, cb, gw


@pytest.mark.parametrize("cosines,expected", [((1.0, 1.0, 1.0), -1.0), ((0.0, 0.0, 0.0), 0.0),
                                              ((0.8, 0.6, 0.7), -0.7)])
def test_distortion_examples(cosines, expected):
    doc, cb, gw = _distortion_setup(cosines)
    d = distortion(doc, CodeIndexSet((0,)), cb, OptimizerConfig(N2=3), gw)
    assert d == pytest.approx(expected, abs=1e-12)


def test_distortion_rejects_bad_code_set():
    doc, cb, gw = _distortion_setup((1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        distortion(doc, CodeIndexSet((1,)), cb, OptimizerConfig(N2=3), gw)


def test_distortion_dimension_mismatch():
    gw = scripted_gateway(lambda r: "R", {"DOC": [1.0, 0.0], "R": [1.0, 0.0, 0.0]})
    doc, cb, _ = _distortion_setup((1.0,))
    with pytest.raises(Exception):
        distortion(doc, CodeIndexSet((0,)), cb, OptimizerConfig(N2=1), gw)


# -- reconstruction step -----------------------------------------------------

def test_single_doc_perfect_reconstruction():
    doc, cb, gw = _distortion_setup((1.0, 1.0, 1.0))
    exprs = {"d": [ValueExpression("x", embedding=np.array([1.0, 0.0]))]}
    cfg = OptimizerConfig(N1=1, N2=3, M=1, beta1=0.0, beta2=0.0)
    step = reconstruction_step([doc], exprs, cb, cfg, gw)
    assert step.score.total == pytest.approx(1.0, abs=1e-12)
    assert step.usage.tolist() == [1.0]


def test_term_isolation_and_formula_oracle():
    docs, exprs, gw = small_corpus(seed=5)
    cb = init_codebook([e for v in exprs.values() for e in v], OptimizerConfig(), gw)
    cfg0 = OptimizerConfig(beta1=0.0, beta2=0.0)
    step = reconstruction_step(docs, exprs, cb, cfg0, gw, iteration=1)
    weighted = sum(r.q_weight * r.d for r in step.records) / step.score.n_docs
    assert step.score.total == pytest.approx(-weighted, abs=1e-12)

    for sign in (1, -1):
        cfg = OptimizerConfig(global_entropy_sign=sign)
        step = reconstruction_step(docs, exprs, cb, cfg, gw, iteration=1)
        assert step.score.total == pytest.approx(oracles.score(docs, exprs, cb, step.records, cfg, gw), abs=1e-9)
        assert abs(step.score.total - step.score.recomposed()) <= 1e-12


def test_reconstruction_records_and_usage():
    docs, exprs, gw = small_corpus(seed=6)
    cb = init_codebook([e for v in exprs.values() for e in v], OptimizerConfig(), gw)
    cfg = OptimizerConfig()
    step = reconstruction_step(docs, exprs, cb, cfg, gw)
    assert step.usage.sum() == pytest.approx(len(docs))
    per_doc = {}
    for r in step.records:
        per_doc.setdefault(r.doc_id, []).append(r)
    for recs in per_doc.values():
        assert 1 <= len(recs) <= cfg.N1
        assert sum(r.q_weight for r in recs) == pytest.approx(1.0)
        assert len({frozenset(r.code_set.indices) for r in recs}) == len(recs)


def test_docs_without_expressions_are_skipped():
    docs, exprs, gw = small_corpus(seed=7)
    exprs = dict(exprs)
    exprs[docs[0].id] = []
    cb = init_codebook([e for v in exprs.values() for e in v], OptimizerConfig(), gw)
    step = reconstruction_step(docs, exprs, cb, OptimizerConfig(), gw)
    assert step.skipped == [docs[0].id]
    assert step.score.skipped_docs == 1 and step.score.n_docs == len(docs) - 1


# -- refinement --------------------------------------------------------------

def _codebook(n_codes, members_per_code=4, dim=8, seed=0, names=None):
    rng = np.random.default_rng(seed)
    codes = []
    for k in range(n_codes):
        anchor = rng.normal(size=dim)
        mem = [ValueExpression(f"c{k} m{i}", (names[k] if names else f"code {k}").lower(), f"d{k}",
                               anchor + 0.1 * rng.normal(size=dim)) for i in range(members_per_code)]
        code = ValueCode(k, names[k] if names else f"Code {k}", np.zeros(dim), mem, age=3)
        code.recompute_centroid()
        codes.append(code)
    return Codebook(codes, iteration=3)


def _records(codebook, d=-0.5):
    return [DistortionRecord(f"doc{k}", CodeIndexSet((k,)), d, 1.0) for k in range(codebook.K)]


def test_zscores_and_improvement():
    assert usage_zscores([10, 10, 10]) is None
    n = np.array([100.0] + [1.0] * 11)
    mean = n.mean()
    sd = np.sqrt(((n - mean) ** 2).mean())
    np.testing.assert_allclose(usage_zscores(n), (n - mean) / sd)
    assert relative_improvement([-0.5]) is None
    assert relative_improvement([-0.9, -0.5, -0.5, -0.5]) == 0.0
    assert relative_improvement([-0.5, -0.6]) == pytest.approx(0.2)


def test_refine_flat_usage_does_nothing():
    cb = _codebook(3)
    new, report = refine_step(cb, _records(cb), [10, 10, 10], OptimizerConfig(), None)
    assert report.no_variance and not report.splits and not report.merges
    assert new.K == 3 and [c.name for c in new.codes] == [c.name for c in cb.codes]
    assert new.iteration == cb.iteration + 1


def test_refine_splits_overused_stagnant_code(world):
    cb = _codebook(12, members_per_code=6, seed=1)
    for c in cb.codes:
        c.distortion_history = [-0.5, -0.5]
    n = [100.0] + [1.0] * 11
    z = usage_zscores(n)
    assert z[0] > 1.0 and all(-0.5 < v for v in z[1:])
    new, report = refine_step(cb, _records(cb), n, OptimizerConfig(), mock_gateway(world))
    assert report.splits == ["Code 0"] and not report.merges
    assert new.K == 13
    assert [c.id for c in new.codes] == list(range(13))
    assert sum(len(c.members) for c in new.codes[:2]) == 6
    assert all(c.usage == 0 for c in new.codes)
    assert new.sigma is None


def test_refine_improving_or_young_code_not_split(world):
    cb = _codebook(12, seed=2)
    for c in cb.codes:
        c.distortion_history = [-0.3, -0.4]
    n = [100.0] + [1.0] * 11
    new, report = refine_step(cb, _records(cb, d=-0.5), n, OptimizerConfig(), mock_gateway(world))
    assert not report.splits and new.K == 12
    cb = _codebook(12, seed=2)
    cb.codes[0].age = 1
    for c in cb.codes:
        c.distortion_history = [-0.5, -0.5]
    _, report = refine_step(cb, _records(cb), n, OptimizerConfig(), mock_gateway(world))
    assert not report.splits


def test_refine_merges_near_duplicate_codes(world):
    cb = _codebook(5, seed=3, names=["Filial Respect", "Thrift", "Courage", "Curiosity", "Filial Piety"])
    # the underused code sits next to "Filial Respect"
    respect = cb.codes[0]
    for m in cb.codes[4].members:
        m.embedding = respect.centroid + 0.05 * np.random.default_rng(0).normal(size=8)
    cb.codes[4].recompute_centroid()
    new, report = refine_step(cb, _records(cb), [50, 50, 50, 50, 1], OptimizerConfig(), mock_gateway(world))
    assert report.merges == [("Filial Piety", "Filial Respect")]
    assert new.K == 4
    merged = [c for c in new.codes if len(c.members) == 8]
    assert len(merged) == 1 and merged[0].age == 0
    assert merged[0].name in {"Filial Respect", "Filial Piety"}


@given(st.integers(0, 10_000), st.integers(2, 10))
@settings(max_examples=30, deadline=None)
def test_refine_conserves_members(seed, K):
    rng = np.random.default_rng(seed)
    cb = _codebook(K, members_per_code=int(rng.integers(2, 5)), seed=seed)
    for c in cb.codes:
        c.distortion_history = [-0.5, -0.5]
    n = rng.exponential(size=K) * rng.integers(1, 50, size=K)
    before = sorted(id(m) for c in cb.codes for m in c.members)
    world = planted_world(n_codes=4, seed=0)
    new, _ = refine_step(cb, _records(cb), n, OptimizerConfig(), mock_gateway(world))
    after = sorted(id(m) for c in new.codes for m in c.members)
    assert before == after
    assert [c.id for c in new.codes] == list(range(new.K))
    for c in new.codes:
        np.testing.assert_allclose(c.centroid, np.mean([m.embedding for m in c.members], axis=0), atol=1e-9)


def test_refine_usage_shape_guard():
    cb = _codebook(3)
    with pytest.raises(ValueError):
        refine_step(cb, [], [1, 2], OptimizerConfig(), None)


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, world):
    cb = _codebook(3)
    cb.score_history = [0.1, 0.2]
    cb.codes[0].distortion_history = [-0.4]
    cid = save_checkpoint(tmp_path / "c.json", cb, {"T": 3}, {"k": 1}, include_embeddings=True)
    back, payload = load_checkpoint(tmp_path / "c.json", None)
    assert payload["codebook_id"] == cid and payload["config"] == {"T": 3}
    assert back.names() == cb.names() and back.score_history == [0.1, 0.2]
    np.testing.assert_array_equal(back.centroids(), cb.centroids())
    assert back.codes[0].distortion_history == [-0.4]
    assert [m.text for m in back.codes[1].members] == [m.text for m in cb.codes[1].members]


def test_checkpoint_without_embeddings_reembeds(tmp_path, world):
    gw = mock_gateway(world)
    exprs, _ = planted_expressions(world, 6, [0, 1])
    cb = init_codebook(exprs, OptimizerConfig(), gw)
    save_checkpoint(tmp_path / "c.json", cb, {}, {}, include_embeddings=False)
    back, _ = load_checkpoint(tmp_path / "c.json", lambda t: gw.embed_texts(list(t)))
    for a, b in zip(cb.codes, back.codes):
        for m1, m2 in zip(a.members, b.members):
            np.testing.assert_allclose(m1.embedding, m2.embedding)
    d = codebook_to_dict(cb)
    with pytest.raises(ValueError, match="no embedder"):
        codebook_from_dict(d, None)
    assert codebook_from_dict(codebook_to_dict(cb, include_embeddings=True), None).K == cb.K


# -- optimize ----------------------------------------------------------------

def test_optimize_early_stop():
    docs, exprs, gw = small_corpus(seed=8)
    res = optimize(docs, exprs, OptimizerConfig(tau1=-100.0), gw)
    assert len(res.scores) == 1 and not res.refinements
    assert res.stop_reason == "score_threshold"


def test_optimize_iteration_cap():
    docs, exprs, gw = small_corpus(seed=9)
    res = optimize(docs, exprs, OptimizerConfig(T=2, tau1=1e9), gw)
    assert len(res.scores) == 2 and len(res.refinements) == 1
    assert res.stop_reason == "max_iterations"
    assert res.codebook.score_history == res.score_history


def test_optimize_is_deterministic(tmp_path):
    ids = []
    for run in range(2):
        docs, exprs, gw = small_corpus(seed=10)
        res = optimize(docs, exprs, OptimizerConfig(T=3, tau1=1e9), gw, checkpoint_dir=tmp_path / f"r{run}")
        ids.append(res.codebook_id)
    assert ids[0] == ids[1]
    assert (tmp_path / "r0" / "final.json").read_bytes() == (tmp_path / "r1" / "final.json").read_bytes()


def test_optimize_resumes_to_identical_result(tmp_path):
    cfg = OptimizerConfig(T=4, tau1=1e9)
    docs, exprs, gw = small_corpus(seed=11)
    clean = optimize(docs, exprs, cfg, gw, checkpoint_dir=tmp_path / "clean")

    def crash(t, score):
        if t == 3:
            raise RuntimeError("simulated crash")

    docs, exprs, gw = small_corpus(seed=11)
    with pytest.raises(OptimizationError) as err:
        optimize(docs, exprs, cfg, gw, checkpoint_dir=tmp_path / "crash", on_iteration=crash)
    assert err.value.checkpoint is not None and "resume" in str(err.value)
    assert [p.name for p in iteration_checkpoints(tmp_path / "crash")] == ["iter_000.json", "iter_001.json",
                                                                           "iter_002.json"]
    docs, exprs, gw = small_corpus(seed=11)
    resumed = optimize(docs, exprs, cfg, gw, checkpoint_dir=tmp_path / "crash")
    assert resumed.codebook_id == clean.codebook_id
    assert (tmp_path / "crash" / "final.json").read_bytes() == (tmp_path / "clean" / "final.json").read_bytes()


def test_optimize_refuses_foreign_checkpoints(tmp_path):
    docs, exprs, gw = small_corpus(seed=12)
    optimize(docs, exprs, OptimizerConfig(T=1), gw, checkpoint_dir=tmp_path)
    (tmp_path / "final.json").unlink()
    with pytest.raises(OptimizationError, match="different optimizer config"):
        optimize(docs, exprs, OptimizerConfig(T=2), gw, checkpoint_dir=tmp_path)


def test_optimize_partition_invariant(tmp_path):
    docs, exprs, gw = small_corpus(seed=13)
    total = sum(len(v) for v in exprs.values())
    optimize(docs, exprs, OptimizerConfig(T=4, tau1=1e9), gw, checkpoint_dir=tmp_path)
    for path in iteration_checkpoints(tmp_path):
        cb, _ = load_checkpoint(path, lambda t: gw.embed_texts(list(t)))
        texts = [(m.doc_id, m.text) for c in cb.codes for m in c.members]
        assert len(texts) == total
        assert [c.id for c in cb.codes] == list(range(cb.K))
        for c in cb.codes:
            np.testing.assert_allclose(c.centroid, np.mean([m.embedding for m in c.members], axis=0), atol=1e-9)
