import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamgate.errors import ConfigError
from streamgate.linalg import (
    col_broadcast_mul,
    matmul,
    row_softmax,
    rowwise_cosine,
    rowwise_l2,
    rowwise_max,
    sigmoid,
)
from streamgate import oracle


def test_matmul_identity():
    out = matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]])
    np.testing.assert_array_equal(out, np.array([[3, 4], [5, 6]], dtype=np.float32))


def test_matmul_hand_computed():
    out = matmul([[1, 2]], [[3], [4]])
    np.testing.assert_allclose(out, [[11.0]])


def test_matmul_dimension_mismatch():
    with pytest.raises(ConfigError):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_row_softmax_symmetry():
    np.testing.assert_allclose(row_softmax([[0.0, 0.0]]), [[0.5, 0.5]])


def test_row_softmax_no_overflow():
    out = row_softmax([[1000.0, 0.0]])
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-6)


def test_row_softmax_closed_form():
    out = row_softmax([[math.log(2.0), 0.0]])
    np.testing.assert_allclose(out, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-6)


def test_rowwise_l2_pythagorean():
    np.testing.assert_allclose(rowwise_l2([[3.0, 4.0]]), [5.0])


def test_rowwise_l2_zero_and_signs():
    np.testing.assert_array_equal(rowwise_l2(np.zeros((3, 4))), np.zeros(3))
    np.testing.assert_allclose(rowwise_l2([[1.0], [-1.0]]), [1.0, 1.0])


def test_rowwise_cosine_identity_and_antipodal():
    a = np.array([[1.0, 2.0, 3.0], [0.5, -0.5, 2.0]], dtype=np.float32)
    np.testing.assert_allclose(rowwise_cosine(a, a), [1.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(rowwise_cosine(a, -a), [-1.0, -1.0], atol=1e-6)


def test_rowwise_cosine_orthogonal():
    np.testing.assert_allclose(rowwise_cosine([[1.0, 0.0]], [[0.0, 1.0]]), [0.0], atol=1e-7)


def test_rowwise_cosine_shape_mismatch():
    with pytest.raises(ConfigError):
        rowwise_cosine(np.zeros((2, 2)), np.zeros((3, 2)))


def test_sigmoid_symmetry_point():
    np.testing.assert_allclose(sigmoid([0.0]), [0.5])


def test_sigmoid_antisymmetry():
    xs = np.array([0.3, 1.7, 4.0], dtype=np.float32)
    np.testing.assert_allclose(sigmoid(xs) + sigmoid(-xs), np.ones(3), atol=1e-6)


def test_sigmoid_closed_form():
    np.testing.assert_allclose(sigmoid([math.log(3.0)]), [0.75], atol=1e-6)


def test_sigmoid_strictly_open_at_extremes():
    out = sigmoid([-1e30, -500.0, 500.0, 1e30])
    assert (out > 0).all() and (out < 1).all()


def test_col_broadcast_mul_identity_and_annihilator():
    m = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.testing.assert_array_equal(col_broadcast_mul(m, np.ones(3)), m)
    np.testing.assert_array_equal(col_broadcast_mul(m, np.zeros(3)), np.zeros((2, 3)))


def test_col_broadcast_mul_hand_computed():
    out = col_broadcast_mul([[1.0, 2.0], [3.0, 4.0]], [10.0, 100.0])
    np.testing.assert_allclose(out, [[10.0, 200.0], [30.0, 400.0]])


def test_col_broadcast_mul_length_mismatch():
    with pytest.raises(ConfigError):
        col_broadcast_mul(np.zeros((2, 3)), np.zeros(2))


def test_rowwise_max_cases():
    np.testing.assert_allclose(rowwise_max([[7.0], [2.0]]), [7.0, 2.0])
    np.testing.assert_allclose(rowwise_max([[1.0, 5.0, 2.0]]), [5.0])
    np.testing.assert_allclose(rowwise_max(np.full((3, 4), 2.5)), [2.5, 2.5, 2.5])


def test_rowwise_max_zero_columns():
    with pytest.raises(ConfigError):
        rowwise_max(np.zeros((2, 0)))


def test_outputs_are_float32():
    assert matmul([[1.0]], [[2.0]]).dtype == np.float32
    assert row_softmax([[1.0, 2.0]]).dtype == np.float32
    assert sigmoid([1.0]).dtype == np.float32


def test_kernels_deterministic_bitwise():
    rng = np.random.default_rng(1234)
    a = rng.standard_normal((6, 5)).astype(np.float32)
    b = rng.standard_normal((5, 7)).astype(np.float32)
    assert matmul(a, b).tobytes() == matmul(a, b).tobytes()
    assert row_softmax(a).tobytes() == row_softmax(a).tobytes()


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(min_value=-1e4, max_value=1e4, width=32), min_size=2, max_size=6),
        min_size=1,
        max_size=5,
    ).filter(lambda rows: len({len(r) for r in rows}) == 1)
)
def test_row_softmax_rows_sum_to_one(rows):
    out = row_softmax(rows)
    assert (out >= 0).all()
    np.testing.assert_allclose(out.sum(axis=1), np.ones(len(rows)), atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), min_size=1, max_size=8))
def test_sigmoid_strictly_in_unit_interval(values):
    out = sigmoid(values)
    assert (out > 0).all() and (out < 1).all()


def test_matches_scalar_oracle_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(20):
        n, k = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        m = rng.standard_normal((n, k)).astype(np.float32)
        v = rng.standard_normal(k).astype(np.float32)
        np.testing.assert_allclose(
            rowwise_l2(m), oracle.o_rowwise_l2(m.tolist()), rtol=1e-5, atol=1e-6
        )
        np.testing.assert_allclose(
            col_broadcast_mul(m, v),
            oracle.o_col_broadcast_mul(m.tolist(), v.tolist()),
            rtol=1e-5,
            atol=1e-6,
        )
