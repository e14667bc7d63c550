import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import random_spd
from mqsim.pod import PodBasis
from mqsim.sparse import pcg_jacobi


def _identity_basis(dim, m=10):
    return PodBasis(dim, lambda x: x.copy(), m)


def test_first_snapshot():
    b = _identity_basis(3)
    b.add_snapshot(np.array([1.0, 0, 0]))
    assert np.allclose(b.Q, [[1], [0], [0]])


def test_gram_schmidt_second_vector():
    b = _identity_basis(3)
    b.add_snapshot(np.array([1.0, 0, 0]))
    b.add_snapshot(np.array([1.0, 1.0, 0]))
    assert np.allclose(b.Q, np.eye(3)[:, :2])


def test_dependent_vector_dropped():
    b = _identity_basis(3)
    b.add_snapshot(np.array([1.0, 0, 0]))
    b.add_snapshot(np.array([2.0, 0, 0]))
    assert b.size == 1


def test_zero_snapshot_skipped():
    b = _identity_basis(3)
    b.add_snapshot(np.zeros(3))
    assert b.size == 0 and len(b.snapshots) == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        _identity_basis(3).add_snapshot(np.ones(4))


def test_empty_guess_is_zero():
    assert np.all(_identity_basis(4).initial_guess(np.ones(4)) == 0)


def test_projection_guess():
    b = _identity_basis(2)
    b.add_snapshot(np.array([1.0, 0.0]))
    assert np.allclose(b.initial_guess(np.array([3.0, 4.0])), [3.0, 0.0])


def test_exact_guess_zero_iterations():
    a = sp.diags([2.0, 4.0]).tocsr()
    b = PodBasis(2, a.__matmul__)
    b.add_snapshot(np.array([1.0, 0.0]))
    b.add_snapshot(np.array([0.0, 1.0]))
    rhs = np.array([2.0, 8.0])
    x0 = b.initial_guess(rhs)
    assert np.allclose(x0, [1.0, 2.0])
    _, stats = pcg_jacobi(a, rhs, x0=x0, rel_tol=1e-10)
    assert stats.iterations == 0


@given(st.integers(0, 10_000), st.integers(1, 25))
@settings(max_examples=30, deadline=None)
def test_orthonormal_and_bounded(seed, count):
    rng = np.random.default_rng(seed)
    dim = 12
    a = random_spd(rng, dim)
    b = PodBasis(dim, lambda x: a @ x, max_size=5)
    base = rng.standard_normal(dim)
    for k in range(count):
        # slowly drifting snapshots, the regime the basis is built for
        b.add_snapshot(base + 1e-3 * k * rng.standard_normal(dim))
        assert b.size <= 5
        assert b.orthonormality_error() <= 1e-10
        r = b.reduced
        assert np.allclose(r, r.T)
        assert np.linalg.eigvalsh(r).min() >= -1e-10 * max(1.0, np.abs(r).max())
        assert np.allclose(r, b.Q.T @ a @ b.Q, atol=1e-10 * np.abs(a).max())


def test_eviction_keeps_latest_snapshots():
    b = _identity_basis(6, m=3)
    for k in range(6):
        b.add_snapshot(np.eye(6)[k])
    assert b.size == 3
    assert np.allclose(np.abs(b.Q.T @ np.eye(6)[:, 3:]), np.eye(3))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_galerkin_optimality(seed):
    rng = np.random.default_rng(seed)
    dim = 15
    a = random_spd(rng, dim)
    b = PodBasis(dim, lambda x: a @ x, 4)
    for _ in range(4):
        b.add_snapshot(rng.standard_normal(dim))
    rhs = rng.standard_normal(dim)
    xstar = np.linalg.solve(a, rhs)
    x0 = b.initial_guess(rhs)

    def energy(e):
        return e @ a @ e

    assert energy(xstar - x0) <= energy(xstar) * (1 + 1e-12)


def test_rhs_in_span_converges_immediately():
    rng = np.random.default_rng(3)
    dim = 20
    a = sp.csr_matrix(random_spd(rng, dim))
    b = PodBasis(dim, a.__matmul__, 3)
    vs = rng.standard_normal((3, dim))
    for v in vs:
        b.add_snapshot(v)
    rhs = a @ (0.3 * vs[0] - 1.2 * vs[2])
    _, stats = pcg_jacobi(a, rhs, x0=b.initial_guess(rhs), rel_tol=1e-10)
    assert stats.iterations == 0


def test_degenerate_reduced_system_falls_back():
    b = PodBasis(3, lambda x: np.zeros(3), 2)
    b.add_snapshot(np.array([1.0, 0, 0]))
    x0 = b.initial_guess(np.ones(3))
    assert np.all(np.isfinite(x0))
