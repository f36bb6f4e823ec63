import numpy as np
import numpy.testing as npt
import pytest

import hardmax
from hardmax.geometry import (
    attention_scores,
    convex_hull_2d,
    hull_contains_2d,
    similarity_matrix,
)

from conftest import hardmax_spec, softmax_spec


class TestTokenConfiguration:
    def test_shape_and_accessors(self):
        z = hardmax.TokenConfiguration(points=np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert z.n == 2
        assert z.dim == 2
        npt.assert_array_equal(z.row(1), [3.0, 4.0])

    def test_points_are_read_only(self):
        z = hardmax.TokenConfiguration(points=np.array([[1.0, 2.0]]))
        with pytest.raises(ValueError):
            z.points[0, 0] = 5.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            hardmax.TokenConfiguration(points=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            hardmax.TokenConfiguration(points=np.empty((0, 2)))
        with pytest.raises(ValueError):
            hardmax.TokenConfiguration(points=np.array([[np.nan, 0.0]]))


class TestSpdFactorization:
    def test_identity(self):
        a = hardmax.SpdMatrix.identity(3)
        npt.assert_array_equal(a.matrix, np.eye(3))
        npt.assert_array_equal(a.factor, np.eye(3))

    def test_known_factorization(self):
        m = np.array([[4.0, 2.0], [2.0, 5.0]])
        a = hardmax.factorize_spd(m)
        npt.assert_allclose(a.factor.T @ a.factor, m, atol=1e-14)

    def test_random_spd_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            d = int(rng.integers(1, 6))
            b = rng.normal(size=(d, d))
            m = b.T @ b + 0.5 * np.eye(d)
            a = hardmax.factorize_spd(m)
            npt.assert_allclose(a.factor.T @ a.factor, m, atol=1e-12)

    def test_rejects_asymmetric(self):
        with pytest.raises(hardmax.NotSymmetricError):
            hardmax.factorize_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(hardmax.NotPositiveDefiniteError):
            hardmax.factorize_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_negative_definite(self):
        with pytest.raises(hardmax.NotPositiveDefiniteError):
            hardmax.factorize_spd(-np.eye(2))


class TestInnerProductAndScores:
    def test_a_inner_identity(self):
        a = hardmax.SpdMatrix.identity(2)
        assert hardmax.a_inner(a, [1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_a_inner_general(self):
        a = hardmax.factorize_spd(np.array([[2.0, 1.0], [1.0, 3.0]]))
        # [2 1; 1 3] @ [1, 0] = [2, 1]; dot with [0, 1] gives 1
        assert hardmax.a_inner(a, [1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_scores_match_pairwise_inner(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(4, 3))
        z = hardmax.TokenConfiguration(points=pts)
        b = rng.normal(size=(3, 3))
        a = hardmax.factorize_spd(b.T @ b + np.eye(3))
        spec = hardmax.AttentionSpec(a=a, alpha=1.0, mode=hardmax.HARDMAX)
        s = attention_scores(z, spec)
        for i in range(4):
            for j in range(4):
                npt.assert_allclose(
                    s[i, j], hardmax.a_inner(a, pts[i], pts[j]), rtol=1e-13
                )


class TestAttentionSets:
    def test_late_leader_initial_sets(self, late_leader_tokens):
        spec = hardmax_spec(2)
        sets = hardmax.attention_sets(late_leader_tokens, spec)
        assert [s.members for s in sets] == [(1,), (2,), (2,)]

    def test_spread_tokens_attend_to_themselves(self):
        z = hardmax.TokenConfiguration(
            points=np.array([[0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]])
        )
        sets = hardmax.attention_sets(z, hardmax_spec(2, alpha=1.0))
        # the top token scores 0 against both side tokens and 1 against itself
        assert sets[0].members == (0,)
        # each side token scores 1 against itself and -1 against the other
        assert sets[1].members == (1,)
        assert sets[2].members == (2,)

    def test_symmetric_pair_ties(self):
        z = hardmax.TokenConfiguration(
            points=np.array([[0.0, 0.5], [-1.0, 1.0], [1.0, 1.0]])
        )
        sets = hardmax.attention_sets(z, hardmax_spec(2, alpha=1.0))
        # token 0 on the axis sees both corners with the identical score 0.5
        assert sets[0].members == (1, 2)

    def test_zero_token_ties_with_everyone(self):
        z = hardmax.TokenConfiguration(points=np.array([[0.0], [2.0]]))
        sets = hardmax.attention_sets(z, hardmax_spec(1))
        assert sets[0].members == (0, 1)

    def test_tie_tol_window_is_relative(self):
        base = 100.0
        z = hardmax.TokenConfiguration(points=np.array([[base], [base + 1e-13]]))
        sets = hardmax.attention_sets(z, hardmax_spec(1, tie_tol=1e-12))
        # score gap ~2e-11 is within 1e-12 * max(1, 1e4)
        assert sets[0].members == (0, 1)
        sets = hardmax.attention_sets(z, hardmax_spec(1, tie_tol=1e-16))
        assert sets[0].members == (1,)

    def test_softmax_mode_has_no_tie_sets(self):
        z = hardmax.TokenConfiguration(points=np.array([[1.0], [2.0]]))
        with pytest.raises(ValueError):
            hardmax.attention_sets(z, softmax_spec(1))


class TestSimilarityMatrix:
    def test_hardmax_rows_are_uniform_on_members(self, late_leader_tokens):
        p = similarity_matrix(late_leader_tokens, hardmax_spec(2))
        expected = np.zeros((3, 3))
        expected[0, 1] = 1.0
        expected[1, 2] = 1.0
        expected[2, 2] = 1.0
        npt.assert_array_equal(p, expected)

    def test_tied_row_splits_mass(self):
        z = hardmax.TokenConfiguration(
            points=np.array([[0.0, 0.5], [-1.0, 1.0], [1.0, 1.0]])
        )
        p = similarity_matrix(z, hardmax_spec(2, alpha=1.0))
        npt.assert_array_equal(p[0], [0.0, 0.5, 0.5])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        z = hardmax.TokenConfiguration(points=rng.normal(size=(6, 2)))
        p = similarity_matrix(z, softmax_spec(2, tau=0.3))
        npt.assert_allclose(p.sum(axis=1), np.ones(6), atol=1e-14)
        assert (p > 0).all()

    def test_small_tau_approaches_hardmax(self):
        z = hardmax.TokenConfiguration(points=np.array([[0.2], [0.9], [1.7]]))
        ph = similarity_matrix(z, hardmax_spec(1))
        ps = similarity_matrix(z, softmax_spec(1, tau=1e-5))
        npt.assert_allclose(ps, ph, atol=1e-12)


class TestTransform:
    def test_invertible_map_applies_rowwise(self):
        z = hardmax.TokenConfiguration(points=np.array([[1.0, 0.0], [0.0, 2.0]]))
        q = np.array([[0.0, 1.0], [-1.0, 0.0]])
        out = hardmax.transform_configuration(z, q)
        npt.assert_allclose(out.points, z.points @ q.T, atol=1e-15)

    def test_singular_map_rejected(self):
        z = hardmax.TokenConfiguration(points=np.array([[1.0, 0.0]]))
        with pytest.raises(hardmax.SingularMatrixError):
            hardmax.transform_configuration(z, np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestConvexHull2d:
    def test_square_with_interior_points(self):
        pts = np.array(
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.8]]
        )
        hull = convex_hull_2d(pts)
        assert sorted(map(tuple, hull)) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_hull_is_counter_clockwise(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 2.0]])
        hull = convex_hull_2d(pts)
        x, y = hull[:, 0], hull[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area2 > 0

    def test_collinear_points_collapse_to_segment(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        hull = convex_hull_2d(pts)
        assert len(hull) == 2
        assert sorted(map(tuple, hull)) == [(0, 0), (3, 3)]

    def test_duplicates_and_single_point(self):
        pts = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        hull = convex_hull_2d(pts)
        assert hull.shape == (1, 2)

    def test_midedge_points_are_dropped(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
        hull = convex_hull_2d(pts)
        assert len(hull) == 3

    def test_containment(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
        hull = convex_hull_2d(pts)
        assert hull_contains_2d(hull, np.array([1.0, 1.0]))
        assert hull_contains_2d(hull, np.array([0.0, 0.0]))
        assert not hull_contains_2d(hull, np.array([2.1, 1.0]))
        # slack admits points just outside
        assert hull_contains_2d(hull, np.array([2.0 + 1e-12, 1.0]), slack=1e-10)

    def test_random_affine_invariance_of_hull_size(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            pts = rng.normal(size=(12, 2))
            hull = convex_hull_2d(pts)
            q = rng.normal(size=(2, 2))
            while abs(np.linalg.det(q)) < 0.1:
                q = rng.normal(size=(2, 2))
            mapped = convex_hull_2d(pts @ q.T)
            assert len(mapped) == len(hull)
