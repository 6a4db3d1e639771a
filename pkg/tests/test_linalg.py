import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghshift import linalg


def complex_matrix(seed, n):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 12))
def test_solve_matches_numpy(seed, n):
    a = complex_matrix(seed, n)
    b = complex_matrix(seed + 1, n)[:, :3]
    assert np.allclose(linalg.solve(a, b), np.linalg.solve(a, b), rtol=1e-9, atol=1e-11)


def test_inverse():
    a = complex_matrix(3, 5)
    assert np.allclose(linalg.inv(a) @ a, np.eye(5), atol=1e-12)


def test_pivoting_handles_zero_leading_entry():
    a = np.array([[0, 1], [1, 0]], dtype=complex)
    assert np.allclose(linalg.solve(a, np.array([2, 3])), [3, 2])


def test_exactly_singular_raises():
    a = np.array([[1, 2], [2, 4]], dtype=complex)
    with pytest.raises(linalg.SingularMatrixError):
        linalg.solve(a, np.ones(2))


def test_batched_matches_single_and_flags_singular():
    a = np.stack([complex_matrix(s, 12) for s in range(6)])
    b = np.stack([complex_matrix(s + 100, 12)[:, :3] for s in range(6)])
    a[2] = 0
    x, singular = linalg.solve_batched(a, b)
    assert singular.tolist() == [False, False, True, False, False, False]
    assert np.isnan(x[2]).all()
    for i in (0, 1, 3, 4, 5):
        assert np.allclose(x[i], linalg.solve(a[i], b[i]), rtol=1e-12, atol=1e-13)


def test_batched_result_independent_of_batch():
    a = np.stack([complex_matrix(s, 12) for s in range(4)])
    b = np.stack([complex_matrix(s + 7, 12)[:, :3] for s in range(4)])
    full, _ = linalg.solve_batched(a, b)
    alone, _ = linalg.solve_batched(a[2:3], b[2:3])
    assert np.array_equal(full[2], alone[0])
