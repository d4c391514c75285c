import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairbundle.errors import MissingRelevanceError, UnknownItemError
from fairbundle.model import (
    Bundle,
    BundleSpec,
    Catalog,
    Item,
    RelevanceView,
    bundle_compatibility,
    bundle_quality,
    bundle_relevance,
    is_valid,
)
from tests.conftest import make_catalog, make_view


def three_item_catalog():
    compat = np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.0], [0.5, 0.0, 1.0]])
    return make_catalog([0, 0, 1], compat=compat)


class TestTypes:
    def test_catalog_rejects_asymmetric_compat(self):
        with pytest.raises(ValueError, match="symmetric"):
            make_catalog([0, 0], compat=[[1.0, 0.2], [0.3, 1.0]])

    def test_catalog_rejects_out_of_range_compat(self):
        with pytest.raises(ValueError):
            make_catalog([0, 0], compat=[[1.0, 1.5], [1.5, 1.0]])

    def test_catalog_requires_positional_ids(self):
        with pytest.raises(ValueError, match="positional"):
            Catalog((Item(1, 0),), 1, 0, np.zeros((1, 1)))

    def test_type_index_bound(self):
        with pytest.raises(ValueError):
            Catalog((Item(0, 0, frozenset({3})),), 1, 2, np.zeros((1, 1)))

    def test_compat_is_read_only(self):
        cat = three_item_catalog()
        with pytest.raises(ValueError):
            cat.compat[0, 1] = 0.0

    def test_bundle_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Bundle((1, 1))

    def test_bundle_spec_size(self):
        with pytest.raises(ValueError):
            BundleSpec(1)
        with pytest.raises(ValueError):
            BundleSpec(3, (-1,))

    def test_caps_default_to_size(self):
        assert list(BundleSpec(4, (1,)).caps_for(3)) == [1, 4, 4]

    def test_view_must_be_sorted(self):
        with pytest.raises(ValueError):
            RelevanceView(0, ((0, 0.2), (1, 0.9)))

    def test_view_score_range(self):
        with pytest.raises(ValueError):
            RelevanceView(0, ((0, 1.2),))

    def test_view_from_scores_breaks_ties_by_id(self):
        view = RelevanceView.from_scores("u", {3: 0.5, 1: 0.5, 2: 0.9})
        assert view.item_ids == (2, 1, 3)


class TestRelevance:
    def test_single_item(self):
        assert bundle_relevance(Bundle((0,)), make_view([0.7])) == pytest.approx(0.7)

    def test_mean_of_three(self):
        assert bundle_relevance(Bundle((0, 1, 2)), make_view([0.9, 0.6, 0.3])) == pytest.approx(0.6, abs=1e-12)

    def test_empty_bundle_is_zero(self):
        assert bundle_relevance(Bundle(), make_view([0.5])) == 0.0

    def test_missing_item(self):
        with pytest.raises(MissingRelevanceError):
            bundle_relevance(Bundle((0, 5)), make_view([0.5, 0.4]))


class TestCompatibility:
    def test_single_pair(self):
        cat = make_catalog([0, 0], compat=[[1.0, 0.5], [0.5, 1.0]])
        assert bundle_compatibility(Bundle((0, 1)), cat) == 0.5

    def test_three_items(self):
        # pairs (0,1)=1.0, (0,2)=0.5, (1,2)=0.0
        assert bundle_compatibility(Bundle((0, 1, 2)), three_item_catalog()) == pytest.approx(0.5, abs=1e-12)

    def test_singleton_is_zero(self):
        assert bundle_compatibility(Bundle((2,)), three_item_catalog()) == 0.0

    def test_unknown_item(self):
        with pytest.raises(UnknownItemError):
            bundle_compatibility(Bundle((0, 9)), three_item_catalog())


class TestQuality:
    def test_weighted_combination(self):
        cat = three_item_catalog()
        view = make_view([0.9, 0.6, 0.3])
        q = bundle_quality(Bundle((0, 1, 2)), view, cat, BundleSpec(3, gamma=1 / 3))
        assert q == pytest.approx(2 / 3 * 0.6 + 1 / 3 * 0.5, abs=1e-9)
        assert q == pytest.approx(0.5667, abs=1e-4)

    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_weight_collapse(self, gamma):
        cat = three_item_catalog()
        view = make_view([0.9, 0.6, 0.3])
        b = Bundle((0, 2))
        q = bundle_quality(b, view, cat, BundleSpec(2, gamma=gamma))
        expected = bundle_relevance(b, view) if gamma == 0.0 else bundle_compatibility(b, cat)
        assert q == expected


class TestValidity:
    def test_plain_pair_is_valid(self):
        cat = make_catalog([0, 0, 0])
        assert is_valid(Bundle((0, 1)), cat, BundleSpec(2))

    def test_wrong_size(self):
        cat = make_catalog([0, 0, 0])
        report = is_valid(Bundle((0, 1, 2)), cat, BundleSpec(2))
        assert not report
        assert not report.size_ok
        assert report.exceeded_types == ()

    def test_type_cap_exceeded(self):
        cat = make_catalog([0, 0], types=[(0,), (0,)])
        report = is_valid(Bundle((0, 1)), cat, BundleSpec(2, (1,)))
        assert not report
        assert report.size_ok
        assert report.exceeded_types == (0,)


# -- properties ----------------------------------------------------------------

@st.composite
def scored_instances(draw, max_items=7):
    n = draw(st.integers(2, max_items))
    unit = st.floats(0.0, 1.0)
    rel = draw(st.lists(unit, min_size=n, max_size=n))
    upper = draw(st.lists(unit, min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    compat = np.eye(n)
    compat[np.triu_indices(n, 1)] = upper
    compat = np.triu(compat) + np.triu(compat, 1).T
    gamma = draw(unit)
    return make_catalog([0] * n, compat=compat), make_view(rel), gamma


class TestProperties:
    @given(scored_instances())
    def test_scores_in_unit_interval(self, inst):
        cat, view, gamma = inst
        b = Bundle(view.item_ids)
        q = bundle_quality(b, view, cat, BundleSpec(len(b), gamma=gamma))
        for v in (bundle_relevance(b, view), bundle_compatibility(b, cat), q):
            assert -1e-12 <= v <= 1 + 1e-12

    @given(scored_instances(), st.randoms(use_true_random=False))
    def test_compatibility_permutation_invariant(self, inst, rnd):
        cat, view, _ = inst
        ids = list(view.item_ids)
        shuffled = ids[:]
        rnd.shuffle(shuffled)
        assert bundle_compatibility(Bundle(tuple(ids)), cat) == bundle_compatibility(Bundle(tuple(shuffled)), cat)

    @given(scored_instances(), st.data())
    def test_monotone_in_relevance(self, inst, data):
        cat, view, gamma = inst
        scores = dict(view.entries)
        k = data.draw(st.sampled_from(sorted(scores)))
        bumped = dict(scores)
        bumped[k] = data.draw(st.floats(scores[k], 1.0))
        b = Bundle(tuple(sorted(scores)))
        spec = BundleSpec(len(b), gamma=min(gamma, 0.99))
        before = bundle_quality(b, view, cat, spec)
        after = bundle_quality(b, RelevanceView.from_scores(0, bumped), cat, spec)
        assert after >= before - 1e-12

    @given(scored_instances(), st.data())
    def test_monotone_in_compatibility(self, inst, data):
        cat, view, gamma = inst
        n = len(cat)
        i, j = data.draw(st.sampled_from([(a, b) for a in range(n) for b in range(a + 1, n)]))
        compat = np.array(cat.compat)
        compat[i, j] = compat[j, i] = data.draw(st.floats(compat[i, j], 1.0))
        b = Bundle(tuple(range(n)))
        spec = BundleSpec(n, gamma=max(gamma, 0.01))
        before = bundle_quality(b, view, cat, spec)
        after = bundle_quality(b, view, make_catalog([0] * n, compat=compat), spec)
        assert after >= before - 1e-12

    @settings(max_examples=50)
    @given(st.integers(2, 6), st.integers(0, 3), st.data())
    def test_valid_bundle_has_exact_size(self, L, n_types, data):
        n = L + 2
        types = [tuple(data.draw(st.sets(st.integers(0, n_types - 1), max_size=2))) if n_types else ()
                 for _ in range(n)]
        cat = make_catalog([0] * n, types=types, n_types=n_types)
        caps = tuple(data.draw(st.integers(0, L)) for _ in range(n_types))
        spec = BundleSpec(L, caps)
        ids = tuple(data.draw(st.permutations(range(n)))[:L])
        b = Bundle(ids)
        if is_valid(b, cat, spec):
            assert len(b) == L
            for drop in ids:
                assert not is_valid(Bundle(tuple(i for i in ids if i != drop)), cat, spec)
