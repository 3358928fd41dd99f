import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dominohd.data import SyntheticSpec, generate_synthetic
from dominohd.generalization import (
    DominoConfig,
    _repopulate,
    aggregate_class_matrices,
    dims_to_select,
    ensemble,
    prepare_samples,
    run_domino,
    select_domain_variant_dims,
    variance_scores,
)
from dominohd.training import DomainModel, TrainConfig, train_domain_models

import oracles


def models_from(arr):
    return [DomainModel(np.array(m, dtype=float), i) for i, m in enumerate(arr)]


def test_aggregate_index_bookkeeping():
    arr = np.arange(12.0).reshape(2, 2, 3)
    mats = aggregate_class_matrices(models_from(arr))
    assert [m.class_id for m in mats] == [0, 1]
    for c, m in enumerate(mats):
        np.testing.assert_array_equal(m.rows, arr[:, c, :])
    rebuilt = np.stack([np.stack([m.rows[lam] for m in mats]) for lam in range(2)])
    np.testing.assert_array_equal(rebuilt, arr)
    with pytest.raises(ValueError):
        aggregate_class_matrices([DomainModel(np.zeros((2, 3)), 0), DomainModel(np.zeros((2, 4)), 1)])


def test_variance_examples():
    same = models_from(np.ones((3, 2, 4)))
    assert not np.any(variance_scores(aggregate_class_matrices(same)))
    v = variance_scores(aggregate_class_matrices(models_from([[[1.0, 0.0]], [[-1.0, 0.0]]])))
    assert v.tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        variance_scores(aggregate_class_matrices(models_from(np.ones((1, 2, 2)))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_variance_matches_oracle_and_is_equivariant(seed):
    rng = np.random.default_rng(seed)
    k, n, d = int(rng.integers(2, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 17))
    arr = rng.standard_normal((k, n, d))
    v = variance_scores(aggregate_class_matrices(models_from(arr)))
    np.testing.assert_allclose(v, oracles.variance_vector(arr), atol=1e-9)
    perm = rng.permutation(d)
    vp = variance_scores(aggregate_class_matrices(models_from(arr[:, :, perm])))
    np.testing.assert_allclose(vp, v[perm], atol=1e-12)


def test_select_examples():
    assert select_domain_variant_dims(np.arange(8.0), 0.25).tolist() == [6, 7]
    assert select_domain_variant_dims(np.ones(8), 0.25).tolist() == [6, 7]
    assert select_domain_variant_dims(np.array([5.0, 1, 5, 0]), 0.5).tolist() == [0, 2]
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            select_domain_variant_dims(np.ones(4), bad)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 600), st.sampled_from([0.05, 0.1, 0.15, 0.25, 0.3, 0.4, 0.6, 0.7, 0.9]), st.integers(0, 99))
def test_select_matches_oracle(d, r, seed):
    v = np.random.default_rng(seed).integers(0, 5, d).astype(float)
    u = select_domain_variant_dims(v, r)
    assert u.tolist() == oracles.select_top(v.tolist(), r)
    assert u.size == dims_to_select(d, r) == oracles.n_selected(d, r)


def test_iteration_count_formula():
    assert DominoConfig(500, 4000, 0.25).iterations == 28
    assert DominoConfig(500, 4000, 0.25).dims_per_iteration == 125
    for d, e, r in [(256, 768, 0.25), (256, 768, 0.05), (100, 333, 0.15), (64, 64, 0.5), (10, 31, 0.3)]:
        assert DominoConfig(d, e, r).iterations == oracles.iterations(d, e, r)
    with pytest.raises(ValueError):
        DominoConfig(100, 50)
    with pytest.raises(ValueError):
        DominoConfig(100, 200, 1.0)


def test_ensemble_examples():
    m1, m2 = np.ones((2, 3)), np.arange(6.0).reshape(2, 3)
    merged, w = ensemble(models_from([m1, m2]), [5, 5])
    np.testing.assert_allclose(w, [0.5, 0.5])
    expected = (m1 + m2) / 2
    np.testing.assert_allclose(merged, expected / np.linalg.norm(expected, axis=1, keepdims=True))
    _, w = ensemble(models_from([m1, m2]), [9, 1])
    np.testing.assert_allclose(w, [0.9, 0.1])
    merged, _ = ensemble(models_from([m1, m2]), [9, 1])
    raw = 0.9 * m1 + 0.1 * m2
    assert merged[1, 2] == pytest.approx(raw[1, 2] / np.linalg.norm(raw[1]))
    _, w = ensemble(models_from(np.ones((4, 2, 3))), [2280] * 4)
    assert w.tolist() == [0.25] * 4 and w.sum() == 1.0
    solo, _ = ensemble(models_from([m2]), [7])
    np.testing.assert_allclose(solo, m2 / np.linalg.norm(m2, axis=1, keepdims=True))
    with pytest.raises(ValueError):
        ensemble(models_from([m1, m2]), [0, 0])


def test_prepare_samples_centers_and_normalizes():
    x = np.array([[1.0, 2.0], [3.0, 2.0]])
    h = prepare_samples(x, x.mean(axis=0), True)
    np.testing.assert_allclose(h, [[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(prepare_samples(x, None, False), x)


def test_column_surgery_is_exact_with_zero_eta():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((40, 24))
    y, g = rng.integers(0, 3, 40), rng.integers(0, 3, 40)
    models, _ = train_domain_models(h, y, g, TrainConfig(), 3, 3)
    before = [m.class_rows.copy() for m in models]
    u = select_domain_variant_dims(variance_scores(aggregate_class_matrices(models)), 0.25)
    for m in models:
        m.class_rows[:, u] = 0.0
    _repopulate(models, h, y, g, u, TrainConfig(learning_rate=0.0), 3, 3, pass_index=1)
    keep = np.setdiff1d(np.arange(24), u)
    for m, b in zip(models, before):
        assert np.array_equal(m.class_rows[:, keep], b[:, keep])
        assert not np.any(m.class_rows[:, u])


@pytest.fixture(scope="module")
def small_data():
    return generate_synthetic(SyntheticSpec(n_domains=3, per_domain=40, sensors=4, window=12, rng_seed=3))[0]


def test_baseline_collapses_to_plain_ensemble(small_data):
    cfg = DominoConfig(64, 64, 0.25)
    model = run_domino(small_data, cfg)
    assert model.is_baseline and model.history == []
    from dominohd.encoder import encode_batch
    h = model.prepare(encode_batch(model.encoder, small_data.windows))
    models, _ = train_domain_models(h, small_data.labels, small_data.domains, cfg.train, 4, 3)
    merged, w = ensemble(models, small_data.domain_counts())
    np.testing.assert_array_equal(model.ensemble, merged)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("extra", [{}, {"from_scratch": True}, {"backend": "rbf"},
                                   {"position_mode": "permute"}, {"passes_per_iteration": 2}])
def test_history_bookkeeping(small_data, extra):
    cfg = DominoConfig(64, 160, 0.25, **extra)
    model = run_domino(small_data, cfg)
    assert len(model.history) == cfg.iterations == 6
    assert all(len(r.selected) == 16 for r in model.history)
    assert sum(len(r.selected) for r in model.history) == 160 - 64
    assert len(model.encoder.regen_log) == 6
    norms = np.linalg.norm(model.ensemble, axis=1)
    np.testing.assert_allclose(norms, 1.0)


def test_run_is_deterministic(small_data):
    a = run_domino(small_data, DominoConfig(48, 96, 0.25, rng_seed=4))
    b = run_domino(small_data, DominoConfig(48, 96, 0.25, rng_seed=4))
    assert np.array_equal(a.ensemble, b.ensemble)
    assert [r.selected for r in a.history] == [r.selected for r in b.history]
    c = run_domino(small_data, DominoConfig(48, 96, 0.25, rng_seed=5))
    assert not np.array_equal(a.ensemble, c.ensemble)


def test_empty_domain_ignored_and_single_domain_rejected(small_data):
    from dominohd.data.dataset import with_meta
    widened = with_meta(small_data, n_domains=5)
    model = run_domino(widened, DominoConfig(32, 64, 0.25))
    assert model.domain_weights[3:].tolist() == [0.0, 0.0]
    one = small_data.subset(np.flatnonzero(small_data.domains == 0))
    with pytest.raises(ValueError):
        run_domino(one, DominoConfig(32, 64, 0.25))
    run_domino(one, DominoConfig(32, 32, 0.25))
