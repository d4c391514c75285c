import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairbundle.errors import DataError, UnknownItemError
from fairbundle.relevance import (
    MFHyper,
    MFModel,
    RatingsTable,
    prediction_bounds,
    synthetic_relevance,
    synthetic_scores,
    top_m,
    train_mf,
)
from fairbundle.synthetic import synthetic_catalog


def rank_one_split(seed=0, n_users=60, n_items=40, train_share=0.8):
    rng = np.random.default_rng(seed)
    a = rng.uniform(1.0, 2.0, n_users)
    b = rng.uniform(1.0, 2.0, n_items)
    mask = rng.random((n_users, n_items)) < train_share
    train = [(u, i, a[u] * b[i]) for u in range(n_users) for i in range(n_items) if mask[u, i]]
    test = [(u, i, a[u] * b[i]) for u in range(n_users) for i in range(n_items) if not mask[u, i]]
    return RatingsTable.from_triples(train), test


@pytest.fixture(scope="module")
def small_model():
    rng = np.random.default_rng(5)
    triples = [(f"u{u}", f"i{i}", float(rng.integers(1, 6))) for u in range(20) for i in range(15)
               if rng.random() < 0.6]
    return train_mf(RatingsTable.from_triples(triples), epochs=10)


class TestRatingsTable:
    def test_last_write_wins(self, caplog):
        table = RatingsTable.from_triples([("a", "x", 1), ("a", "y", 2), ("a", "x", 5)])
        assert len(table) == 2
        assert table.duplicates == 1
        assert dict(zip(table.items, table.ratings)) == {"x": 5.0, "y": 2.0}
        assert "duplicate" in caplog.text


class TestTraining:
    def test_recovers_rank_one_structure(self):
        train, test = rank_one_split()
        model = train_mf(train, dim=1, epochs=200, lr=0.01, reg=0.0)
        err = np.sqrt(np.mean([(model.predict(u, i) - r) ** 2 for u, i, r in test]))
        assert err <= 0.05

    def test_constant_ratings(self):
        rng = np.random.default_rng(1)
        table = RatingsTable.from_triples([(u, i, 3.5) for u in range(30) for i in range(20) if rng.random() < 0.5])
        # small initial factors: the exact solution is bias-only
        model = train_mf(table, init_std=1e-3)
        assert np.abs(model.predict_matrix() - 3.5).max() <= 1e-3

    def test_bit_identical_given_seed(self):
        train, _ = rank_one_split(seed=2)
        a = train_mf(train, MFHyper(dim=4, epochs=5, seed=3))
        b = train_mf(train, MFHyper(dim=4, epochs=5, seed=3))
        assert np.array_equal(a.user_factors, b.user_factors)
        assert np.array_equal(a.item_factors, b.item_factors)
        assert np.array_equal(a.item_bias, b.item_bias)

    def test_rmse_history(self):
        train, _ = rank_one_split(seed=3)
        model = train_mf(train, epochs=20)
        h = np.asarray(model.rmse_history)
        assert len(h) == 20 and np.all(np.isfinite(h))
        assert h[-5:].mean() < h[:5].mean()

    def test_empty_input(self):
        with pytest.raises(DataError):
            train_mf(RatingsTable.from_triples([]))

    def test_divergence_reported(self):
        train, _ = rank_one_split(seed=4)
        with pytest.raises(DataError, match="diverged"):
            train_mf(train, lr=50.0, epochs=50)

    def test_round_trip(self, small_model, tmp_path):
        path = tmp_path / "model.npz"
        small_model.save(path)
        loaded = MFModel.load(path)
        assert loaded.user_keys == small_model.user_keys
        assert loaded.hyper == small_model.hyper
        assert np.array_equal(loaded.predict_matrix(), small_model.predict_matrix())


class TestTopM:
    def test_single_best(self, small_model):
        pred = small_model.predict_user("u0")
        view = top_m(small_model, "u0", 1, prediction_bounds(small_model))
        assert view.item_ids == (int(np.argmax(pred)),)

    def test_global_bounds_map_to_unit_interval(self, small_model):
        bounds = prediction_bounds(small_model)
        pred = small_model.predict_matrix()
        u_max, _ = np.unravel_index(np.argmax(pred), pred.shape)
        u_min, _ = np.unravel_index(np.argmin(pred), pred.shape)
        n = len(small_model.item_keys)
        top = top_m(small_model, small_model.user_keys[u_max], n, bounds)
        bottom = top_m(small_model, small_model.user_keys[u_min], n, bounds)
        assert top.entries[0][1] == 1.0
        assert bottom.entries[-1][1] == 0.0

    def test_order_matches_raw_predictions(self, small_model):
        pred = small_model.predict_user("u3")
        view = top_m(small_model, "u3", len(pred), prediction_bounds(small_model))
        assert list(view.item_ids) == list(np.lexsort((np.arange(len(pred)), -pred)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 15), st.integers(1, 15))
    def test_prefix_property(self, small_model, m1, m2):
        bounds = prediction_bounds(small_model)
        lo, hi = sorted((m1, m2))
        assert top_m(small_model, "u1", hi, bounds).entries[:lo] == top_m(small_model, "u1", lo, bounds).entries

    def test_unknown_user(self, small_model):
        with pytest.raises(UnknownItemError):
            top_m(small_model, "nobody", 3, prediction_bounds(small_model))

    def test_catalog_handles(self, small_model):
        cat = synthetic_catalog(len(small_model.item_keys), 2, seed=0)
        cat = type(cat)(cat.items, cat.n_groups, cat.n_types, cat.compat,
                        tuple(reversed(small_model.item_keys)))
        view = top_m(small_model, "u2", 4, prediction_bounds(small_model), cat)
        best_key = small_model.item_keys[int(np.argmax(small_model.predict_user("u2")))]
        assert cat.keys[view.item_ids[0]] == best_key


class TestSynthetic:
    def test_group_gap(self):
        cat = synthetic_catalog(200, 2, seed=0)
        scores = synthetic_scores(cat, 100, skew=0.2, seed=1)
        assert scores.size >= 10_000
        assert 0.0 <= scores.min() and scores.max() <= 1.0
        gap = scores[:, cat.groups == 0].mean() - scores[:, cat.groups == 1].mean()
        assert gap == pytest.approx(0.2, abs=0.02)

    def test_no_skew(self):
        cat = synthetic_catalog(200, 2, seed=0)
        scores = synthetic_scores(cat, 100, skew=0.0, seed=1)
        gap = scores[:, cat.groups == 0].mean() - scores[:, cat.groups == 1].mean()
        assert abs(gap) < 0.02

    def test_vector_skew(self):
        cat = synthetic_catalog(300, 3, seed=2)
        scores = synthetic_scores(cat, 100, skew=(0.3, 0.1, 0.0), seed=3)
        means = [scores[:, cat.groups == k].mean() for k in range(3)]
        assert means[0] - means[2] == pytest.approx(0.3, abs=0.02)
        assert means[1] - means[2] == pytest.approx(0.1, abs=0.02)

    def test_reproducible_stream(self):
        cat = synthetic_catalog(50, 2, seed=0)
        a = [v.entries for v in synthetic_relevance(cat, 5, 0.2, seed=9, M=10)]
        b = [v.entries for v in synthetic_relevance(cat, 5, 0.2, seed=9, M=10)]
        assert a == b
        assert all(len(e) == 10 for e in a)

    def test_bad_offsets(self):
        cat = synthetic_catalog(10, 2, seed=0)
        with pytest.raises(ValueError):
            synthetic_scores(cat, 2, skew=(0.1, 0.2, 0.3))
        with pytest.raises(ValueError):
            synthetic_scores(cat, 2, skew=1.0)
