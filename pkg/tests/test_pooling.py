"""Tests for the global pooling operators and their gradients."""

import numpy as np
import pytest

from wsed.pooling import PoolingSpec, gap, gmp, gwrp, pool_batch, pool_grad


def random_masks(n, rng, max_side=32):
    masks = []
    for _ in range(n):
        t = rng.integers(1, max_side + 1)
        f = rng.integers(1, max_side + 1)
        masks.append(rng.uniform(0, 1, (t, f)))
    return masks


class TestGmp:
    def test_simple_max(self):
        assert gmp(np.array([[0.2, 0.9], [0.1, 0.3]])) == 0.9

    def test_all_zero_tie_break(self):
        mask = np.zeros((3, 4))
        value, grad = pool_grad(mask, PoolingSpec("gmp"))
        assert value == 0.0
        expected = np.zeros((3, 4))
        expected[0, 0] = 1.0
        np.testing.assert_array_equal(grad, expected)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        mask = rng.uniform(0, 1, (4, 5))
        _, grad = pool_grad(mask, PoolingSpec("gmp"))
        eps = 1e-6
        for i in range(4):
            for j in range(5):
                m2 = mask.copy()
                m2[i, j] += eps
                m1 = mask.copy()
                m1[i, j] -= eps
                num = (gmp(m2) - gmp(m1)) / (2 * eps)
                assert abs(num - grad[i, j]) < 1e-8

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            gmp(np.zeros((0, 3)))


class TestGap:
    def test_simple_mean(self):
        assert gap(np.array([[1.0, 0.0], [0.0, 1.0]])) == 0.5

    def test_constant_mask(self):
        assert gap(np.full((7, 3), 0.42)) == pytest.approx(0.42)

    def test_gradient_uniform(self):
        _, grad = pool_grad(np.random.default_rng(1).uniform(0, 1, (6, 5)),
                            PoolingSpec("gap"))
        np.testing.assert_allclose(grad, 1.0 / 30)


class TestGwrp:
    def test_hand_computed_value(self):
        # values [1.0, 0.5, 0.0] at r=0.5: (1 + 0.25 + 0) / 1.75 = 5/7
        mask = np.array([[1.0, 0.5, 0.0]])
        assert gwrp(mask, 0.5) == pytest.approx(5.0 / 7.0, abs=1e-12)

    def test_r_zero_is_gmp(self):
        rng = np.random.default_rng(2)
        for mask in random_masks(50, rng):
            assert gwrp(mask, 0.0) == gmp(mask)

    def test_r_one_is_gap(self):
        rng = np.random.default_rng(3)
        for mask in random_masks(50, rng):
            assert gwrp(mask, 1.0) == pytest.approx(gap(mask), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        mask = rng.uniform(0, 1, (3, 4))
        _, grad = pool_grad(mask, PoolingSpec("gwrp", 0.7))
        eps = 1e-7
        for i in range(3):
            for j in range(4):
                m2 = mask.copy()
                m2[i, j] += eps
                m1 = mask.copy()
                m1[i, j] -= eps
                num = (gwrp(m2, 0.7) - gwrp(m1, 0.7)) / (2 * eps)
                assert abs(num - grad[i, j]) < 1e-7

    def test_tied_values_rank_by_row_major(self):
        mask = np.array([[0.5, 0.5], [0.5, 0.1]])
        _, grad = pool_grad(mask, PoolingSpec("gwrp", 0.5))
        w = np.array([1.0, 0.5, 0.25, 0.125])
        w /= w.sum()
        expected = np.array([[w[0], w[1]], [w[2], w[3]]])
        np.testing.assert_allclose(grad, expected)

    def test_r_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            PoolingSpec("gwrp", 1.5)


class TestInvariants:
    def test_sandwich_and_monotonicity(self):
        rng = np.random.default_rng(5)
        grid = [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0]
        for mask in random_masks(50, rng):
            lo, hi = gap(mask), gmp(mask)
            prev = None
            for r in grid:
                v = gwrp(mask, r)
                assert lo - 1e-12 <= v <= hi + 1e-12
                if prev is not None:
                    assert v <= prev + 1e-12
                prev = v

    def test_gradient_sums_to_one(self):
        rng = np.random.default_rng(6)
        mask = rng.uniform(0, 1, (8, 9))
        for spec in (PoolingSpec("gmp"), PoolingSpec("gap"),
                     PoolingSpec("gwrp", 0.3), PoolingSpec("gwrp", 0.97)):
            _, grad = pool_grad(mask, spec)
            assert grad.sum() == pytest.approx(1.0, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        mask = rng.uniform(0, 1, (5, 6))
        perm = rng.permutation(30).reshape(5, 6)
        shuffled = mask.ravel()[perm.ravel()].reshape(5, 6)
        for spec in (PoolingSpec("gmp"), PoolingSpec("gap"),
                     PoolingSpec("gwrp", 0.8)):
            assert pool_grad(mask, spec)[0] == pytest.approx(
                pool_grad(shuffled, spec)[0], abs=1e-12)

    def test_range_preservation(self):
        rng = np.random.default_rng(8)
        for mask in random_masks(30, rng):
            for r in (0.0, 0.4, 1.0):
                v = gwrp(mask, r)
                assert mask.min() - 1e-12 <= v <= mask.max() + 1e-12

    def test_batched_matches_single(self):
        rng = np.random.default_rng(9)
        flat = rng.uniform(0, 1, (10, 24))
        for spec in (PoolingSpec("gmp"), PoolingSpec("gap"),
                     PoolingSpec("gwrp", 0.6)):
            values, grads = pool_batch(flat, spec)
            for i in range(10):
                v, g = pool_grad(flat[i].reshape(4, 6), spec)
                assert values[i] == pytest.approx(v, abs=1e-14)
                np.testing.assert_allclose(grads[i].reshape(4, 6), g)
