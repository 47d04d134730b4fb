import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from vvflow.linalg import (BlockSystem, DirectFactor, FactorCache, SingularSystemError,
                           nested_dissection, saddle_system, solve, solve_direct, solve_krylov)


def random_saddle(rng, n=30, m=6):
    R = rng.standard_normal((n, n))
    A = sp.csr_matrix(R @ R.T + n * np.eye(n))
    B = sp.csr_matrix(rng.standard_normal((m, n)))
    return A, B


@given(st.integers(0, 10_000))
def test_direct_matches_dense(seed):
    rng = np.random.default_rng(seed)
    A, B = random_saddle(rng)
    F = rng.standard_normal(A.shape[0])
    system = saddle_system(A, B, F)
    x, rep = solve_direct(system)
    assert np.allclose(x, np.linalg.solve(system.matrix.toarray(), system.rhs))
    assert rep.residual < 1e-12


def test_mean_border_and_krylov_agree(rng):
    A, B = random_saddle(rng)
    F = rng.standard_normal(A.shape[0])
    mean = np.ones(B.shape[0])
    system = saddle_system(A, B, F, mean=mean, schur=-sp.eye(B.shape[0]))
    x1, _ = solve(system, "direct")
    x2, rep = solve_krylov(system, tol=1e-12)
    assert np.allclose(x1, x2, atol=1e-8)
    assert rep.residual <= 1.001e-12
    with pytest.raises(ValueError):
        solve(system, "cholesky")


def test_nested_dissection_is_permutation(rng):
    pts = rng.uniform(size=(200, 3))
    kind = np.zeros(200)
    kind[-5:] = 1
    pts[-1] = np.nan
    p = nested_dissection(pts, kind)
    assert sorted(p.tolist()) == list(range(200))
    assert p[-2] == 199  # border just before the last unknown


def test_ordering_with_fallback(rng):
    A, _ = random_saddle(rng, 40)
    b = rng.standard_normal(40)
    f = DirectFactor(A, np.arange(40)[::-1])
    assert np.allclose(A @ f.solve(b), b)


def test_singular_systems_are_diagnosed():
    K = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 2.0]]))
    with pytest.raises(SingularSystemError) as e:
        DirectFactor(K)
    assert e.value.row == 1
    K2 = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        solve_direct(BlockSystem(K2, np.array([1.0, 2.0])))


def test_block_system_validation():
    with pytest.raises(ValueError):
        BlockSystem(sp.eye(3), np.zeros(2))
    with pytest.raises(ValueError):
        BlockSystem(sp.csr_matrix(np.ones((2, 3))), np.zeros(2))


def test_factor_cache_lru():
    c = FactorCache(2)
    calls = []
    build = lambda k: (lambda: calls.append(k) or k)
    for k in ("a", "b", "a", "c", "b"):
        c.get(k, build(k))
    assert calls == ["a", "b", "c", "b"]
    assert len(c) == 2
    c.clear()
    assert len(c) == 0
