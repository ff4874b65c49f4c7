"""Tests for the numeric core: tensors, tape, ops, rng and gradient checks."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dprompt.errors import ConfigError, EvaluationError, ShapeError, TapeError
from dprompt.numerics import (
    GradTape, RngStream, Tensor2D, add, analytic_gradient, concat_cols, concat_rows,
    cross_entropy, gelu, grad_check, layer_norm, logsumexp_rows, matmul, mean_all, mul,
    normalize_rows, numeric_gradient, scale, slice_cols, slice_rows, softmax_rows, sub,
    sum_all, tanh, transpose,
)


class TestTensor2D:
    def test_rejects_empty_and_non_2d(self):
        with pytest.raises(ShapeError):
            Tensor2D(np.zeros((0, 3)))
        with pytest.raises(ShapeError):
            Tensor2D([1.0, 2.0])

    def test_rejects_non_finite(self):
        with pytest.raises(EvaluationError):
            Tensor2D([[1.0, float("nan")]])

    def test_value_is_read_only_copy(self):
        source = np.ones((2, 2))
        t = Tensor2D(source)
        source[0, 0] = 5.0
        assert t.value[0, 0] == 1.0
        assert not t.value.flags.writeable

    def test_data_is_row_major(self):
        assert Tensor2D([[1, 2], [3, 4]]).data == (1.0, 2.0, 3.0, 4.0)


class TestSoftmax:
    def test_examples(self):
        assert_allclose(softmax_rows(Tensor2D([[0.0, 0.0]])).value, [[0.5, 0.5]], atol=1e-15)
        assert_allclose(softmax_rows(Tensor2D([[1000.0] * 3])).value, [[1 / 3] * 3], atol=1e-15)
        assert_allclose(softmax_rows(Tensor2D([[0.0, math.log(3.0)]])).value, [[0.25, 0.75]], atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        s = softmax_rows(Tensor2D(rng.uniform(6, 9, -1e4, 1e4))).value
        assert np.abs(s.sum(axis=1) - 1.0).max() < 1e-12

    def test_masked_entries_are_exactly_zero(self, rng):
        mask = np.array([[True, False, True], [False, True, True]])
        s = softmax_rows(Tensor2D(rng.normal(2, 3)), mask).value
        assert s[0, 1] == 0.0 and s[1, 0] == 0.0
        assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)

    def test_fully_masked_row_raises(self):
        with pytest.raises(ShapeError):
            softmax_rows(Tensor2D([[1.0, 2.0]]), np.array([[False, False]]))

    def test_all_true_mask_matches_unmasked(self, rng):
        m = Tensor2D(rng.normal(3, 4))
        assert_array_equal(softmax_rows(m, np.ones((3, 4), dtype=bool)).value, softmax_rows(m).value)


class TestMatmul:
    def test_examples(self, rng):
        assert matmul(Tensor2D([[1, 2]]), Tensor2D([[3], [4]])).item() == 11.0
        m = Tensor2D(rng.normal(3, 3))
        assert_array_equal(matmul(Tensor2D.eye(3), m).value, m.value)

    def test_matches_triple_loop(self, rng):
        a, b = rng.normal(5, 4), rng.normal(4, 3)
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                s = 0.0
                for k in range(4):
                    s += a[i, k] * b[k, j]
                expected[i, j] = s
        assert_array_equal(matmul(Tensor2D(a), Tensor2D(b)).value, expected)

    def test_inner_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor2D(np.ones((2, 3))), Tensor2D(np.ones((2, 3))))


class TestGradTape:
    def test_mixed_tapes_raise(self):
        a = GradTape().watch([[1.0]])
        b = GradTape().watch([[2.0]])
        with pytest.raises(TapeError):
            add(a, b)

    def test_linear_gradient(self):
        tape = GradTape()
        x = tape.watch(np.arange(6.0).reshape(2, 3))
        y = add(sum_all(scale(x, 3.0)), sum_all(scale(x, -1.0)))
        (g,) = tape.gradient(y, [x])
        assert_array_equal(g, np.full((2, 3), 2.0))

    def test_intermediate_and_unreached_sources(self):
        tape = GradTape()
        x = tape.watch([[1.0, 2.0]])
        unused = tape.watch([[5.0]])
        h = scale(x, 2.0)
        y = sum_all(mul(h, h))
        gh, gu = tape.gradient(y, [h, unused])
        assert_allclose(gh, 2 * h.value)
        assert_array_equal(gu, np.zeros((1, 1)))

    def test_output_must_be_scalar(self):
        tape = GradTape()
        x = tape.watch([[1.0, 2.0]])
        with pytest.raises(ShapeError):
            tape.gradient(scale(x, 2.0), [x])

    def test_replay_is_bit_identical(self, rng):
        value = rng.normal(3, 4)

        def run():
            tape = GradTape()
            x = tape.watch(value)
            y = sum_all(softmax_rows(matmul(x, transpose(x))))
            return tape.gradient(mean_all(gelu(scale(y, 0.1))), [x])[0]

        assert_array_equal(run(), run())


def _weighted(out, weights):
    return sum_all(mul(out, Tensor2D(weights)))


class TestGradCheck:
    def test_sum(self, rng):
        assert grad_check(lambda x: sum_all(x), rng.normal(3, 4)) < 1e-9

    def test_sum_of_softmax_has_zero_gradient(self, rng):
        f = lambda x: sum_all(softmax_rows(x))
        x = rng.normal(2, 5)
        assert np.abs(analytic_gradient(f, x)).max() < 1e-12
        assert np.abs(numeric_gradient(f, x, 1e-5)).max() < 1e-9

    def test_eps_range(self, rng):
        with pytest.raises(ConfigError):
            grad_check(lambda x: sum_all(x), rng.normal(2, 2), eps=1e-2)

    def test_non_finite_value(self):
        with pytest.raises(EvaluationError):
            grad_check(lambda x: sum_all(scale(x, 1e308)), np.full((1, 2), 10.0))

    @pytest.mark.parametrize("op", [
        "tanh", "gelu", "softmax", "logsumexp", "layer_norm", "normalize", "matmul",
        "cross_entropy", "concat_slice", "broadcast",
    ])
    def test_ops(self, rng, op):
        w = rng.child("w").normal(3, 4)
        other = Tensor2D(rng.child("other").normal(4, 4))
        row = Tensor2D(rng.child("row").normal(1, 4))
        gamma = Tensor2D(rng.child("gamma").uniform(1, 4, 0.5, 1.5))
        beta = Tensor2D(rng.child("beta").normal(1, 4))
        fns = {
            "tanh": lambda x: _weighted(tanh(x), w),
            "gelu": lambda x: _weighted(gelu(x), w),
            "softmax": lambda x: _weighted(softmax_rows(x), w),
            "logsumexp": lambda x: _weighted(logsumexp_rows(x, np.array([[True, True, False, True]] * 3)),
                                             w[:, :1]),
            "layer_norm": lambda x: _weighted(layer_norm(x, gamma, beta), w),
            "normalize": lambda x: _weighted(normalize_rows(x), w),
            "matmul": lambda x: _weighted(matmul(x, other), w),
            "cross_entropy": lambda x: cross_entropy(x, [0, 3, 1]),
            "concat_slice": lambda x: _weighted(concat_cols(
                slice_cols(x, 2, 4), slice_rows(slice_cols(concat_rows(x, row), 0, 2), 1, 4)), w),
            "broadcast": lambda x: _weighted(sub(mul(x, row), add(x, row)), w),
        }
        x = rng.child("x").normal(3, 4)
        assert grad_check(fns[op], x, 1e-5) < 1e-5


class TestRngStream:
    def test_same_seed_same_draws(self):
        assert_array_equal(RngStream(7).normal(3, 3), RngStream(7).normal(3, 3))

    def test_children_are_deterministic_and_distinct(self):
        parent = RngStream(7)
        assert_array_equal(parent.child("a", 1).normal(2, 2), RngStream(7).child("a", 1).normal(2, 2))
        assert not np.array_equal(parent.child("a").normal(2, 2), parent.child("b").normal(2, 2))

    @pytest.mark.parametrize("seed", [-1, 2 ** 64, 1.5, True])
    def test_invalid_seed(self, seed):
        with pytest.raises(ConfigError):
            RngStream(seed)

    def test_xavier_bound(self):
        w = RngStream(1).xavier_uniform(8, 8)
        assert np.abs(w).max() <= math.sqrt(6.0 / 16)
