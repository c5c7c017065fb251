import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixem.errors import InvalidArgumentError
from mixem.metrics import is_success, match_components, moment_residual, sq_distance_matrix


def brute_force(est, truth):
    cost = sq_distance_matrix(est, truth)
    K = cost.shape[0]
    return min(
        (sum(cost[k, p[k]] for k in range(K)), p) for p in itertools.permutations(range(K))
    )


@st.composite
def pairs(draw, max_k=7):
    K = draw(st.integers(1, max_k))
    d = draw(st.integers(1, 3))
    elems = st.floats(-10, 10, allow_nan=False)
    est = draw(arrays(float, (K, d), elements=elems))
    tru = draw(arrays(float, (K, d), elements=elems))
    return est, tru


class TestMatch:
    def test_identity(self):
        t = np.array([[0.0, 1.0], [2.0, -1.0], [5.0, 5.0]])
        r = match_components(t, t)
        assert r.permutation == (0, 1, 2)
        assert r.max_distance == 0 and r.total_sq_distance == 0

    def test_swap(self):
        t = np.array([[0.0], [1.0], [10.0]])
        r = match_components(t[[1, 0, 2]], t)
        assert r.permutation == (1, 0, 2)
        assert r.max_distance == 0

    def test_worked_example(self):
        r = match_components([[1.1], [0.2], [9.5]], [[0.0], [1.0], [10.0]])
        assert r.permutation == (1, 0, 2)
        np.testing.assert_allclose(r.per_component_distance, [0.2, 0.1, 0.5], atol=1e-12)
        assert r.total_sq_distance == pytest.approx(0.3, abs=1e-12)
        assert r.max_distance == pytest.approx(0.5, abs=1e-12)

    def test_tie_breaks_lexicographically(self):
        # every permutation costs the same
        est = np.zeros((4, 2))
        tru = np.ones((4, 2))
        assert match_components(est, tru).permutation == (0, 1, 2, 3)
        # two equally good pairings of a symmetric configuration
        r = match_components([[-1.0], [1.0], [-1.0]], [[0.0], [0.0], [5.0]])
        assert r.permutation == (0, 2, 1)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            match_components(np.zeros((2, 1)), np.zeros((3, 1)))
        with pytest.raises(InvalidArgumentError):
            match_components(np.zeros((2, 2)), np.zeros((2, 1)))

    def test_report_dict(self):
        r = match_components([[0.0], [3.0]], [[3.0], [0.5]])
        assert r.to_dict() == {
            "permutation": [1, 0],
            "distances": [0.0, 0.5],
            "max_distance": 0.5,
            "moment_residual": 3.0,
        }

    @given(pairs())
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, pair):
        est, tru = pair
        best, _ = brute_force(est, tru)
        r = match_components(est, tru)
        assert r.total_sq_distance == pytest.approx(best, rel=1e-12, abs=1e-12)
        assert sorted(r.permutation) == list(range(len(est)))
        assert r.max_distance == pytest.approx(r.per_component_distance.max())
        assert r.total_sq_distance == pytest.approx(float(np.sum(r.per_component_distance**2)))

    @given(pairs(max_k=5), st.randoms(use_true_random=False))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, pair, rnd):
        est, tru = pair
        perm = list(range(len(est)))
        rnd.shuffle(perm)
        base = match_components(est, tru).total_sq_distance
        assert match_components(est[perm], tru).total_sq_distance == pytest.approx(base, rel=1e-12, abs=1e-12)
        assert match_components(est[perm], tru[perm]).total_sq_distance == pytest.approx(base, rel=1e-12, abs=1e-12)


class TestMomentResidual:
    def test_balanced(self):
        assert moment_residual([[-1.0], [1.0]]) == 0.0

    def test_two_dims(self):
        assert moment_residual([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(np.sqrt(2), rel=1e-15)

    @given(arrays(float, (3, 2), elements=st.floats(-5, 5)), arrays(float, 2, elements=st.floats(-5, 5)))
    def test_translation(self, means, c):
        expected = np.linalg.norm(means.sum(axis=0) + 3 * c)
        assert moment_residual(means + c) == pytest.approx(expected, abs=1e-12)

    @given(arrays(float, (4, 3), elements=st.floats(-5, 5)), st.floats(-10, 10))
    def test_homogeneous(self, means, c):
        assert moment_residual(c * means) == pytest.approx(abs(c) * moment_residual(means), abs=1e-11)


class TestSuccess:
    def test_exact(self):
        t = np.array([[0.0], [4.0]])
        assert is_success(t, t, 1e-9)
        assert is_success(t[::-1], t)

    def test_offset_fails(self):
        assert not is_success([[-3.0], [3.6]], [[-3.0], [3.0]], 0.5)

    def test_boundary_inclusive(self):
        assert is_success([[0.5]], [[0.0]], 0.5)

    def test_bad_threshold(self):
        with pytest.raises(InvalidArgumentError):
            is_success([[0.0]], [[0.0]], 0.0)

    @given(pairs(max_k=4), st.floats(0.01, 5))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_threshold(self, pair, thr):
        est, tru = pair
        if is_success(est, tru, thr):
            assert is_success(est, tru, thr * 2)
