import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from clusterafem.assembly import assemble_mass, assemble_stiffness
from clusterafem.eigensolver import (EigensolverError, Factorization, smallest_eigenpairs,
                                     spectral_gaps)
from clusterafem.fe_space import build_space
from clusterafem.mesh import build_initial, refine, uniform_refine

PI2 = np.pi ** 2


def pencil(domain, r, rounds=0, sub=4, marks=()):
    m = build_initial(domain, sub)
    if len(marks):
        m = refine(m, marks)
    m = uniform_refine(m, rounds)
    V = build_space(m, r)
    return V, assemble_stiffness(V), assemble_mass(V)


def test_dense_two_by_two():
    A = np.diag([2.0, 3.0])
    res = smallest_eigenpairs(A, np.eye(2), 2)
    assert np.allclose(res.values, [2.0, 3.0])
    assert np.allclose(res.vectors, np.eye(2))


def test_unit_square_first_eigenvalue():
    _, A, B = pencil("unit_square", 2, rounds=3, sub=1)
    res = smallest_eigenpairs(A, B, 1)
    lam = 2 * PI2
    assert lam <= res.values[0] <= lam * (1 + 1e-3)


@pytest.mark.parametrize("domain, r, rounds, sub", [
    ("slit", 1, 1, 4), ("unit_square", 2, 1, 2), ("lshape", 3, 0, 4), ("square2", 2, 0, 4),
])
def test_matches_dense_oracle(domain, r, rounds, sub):
    V, A, B = pencil(domain, r, rounds, sub)
    assert 64 < V.dim <= 400
    res = smallest_eigenpairs(A, B, 6)
    assert res.meta["method"] == "subspace-iteration"
    ref = la.eigh(A.toarray(), B.toarray(), eigvals_only=True, subset_by_index=[0, 5])
    assert np.all(np.abs(res.values - ref) <= 1e-9 * ref)


def test_cluster_invariants():
    _, A, B = pencil("slit", 2, rounds=1)
    res = smallest_eigenpairs(A, B, 13)
    X = res.vectors
    assert np.abs(X.T @ (B @ X) - np.eye(13)).max() <= 1e-10
    assert np.all(np.diff(res.values) >= 0) and res.values[0] > 0
    assert np.all(res.residuals <= res.tol)
    # direct check of the dual-norm residual
    F = Factorization(A)
    R = A @ X - (B @ X) * res.values
    num = np.einsum("ij,ij->j", R, F.solve(R))
    BX = B @ X
    den = res.values ** 2 * np.einsum("ij,ij->j", BX, F.solve(BX))
    assert np.all(np.sqrt(num / den) <= 1e-10)


def test_monotone_under_refinement_and_upper_bounds():
    m = build_initial("slit", 4)
    prev = None
    rng = np.random.default_rng(3)
    for _ in range(4):
        V = build_space(m, 2)
        vals = smallest_eigenpairs(assemble_stiffness(V), assemble_mass(V), 12).values
        if prev is not None:
            assert np.all(vals <= prev * (1 + 1e-9))
        prev = vals
        m = refine(m, rng.choice(m.ne, m.ne // 3, replace=False))
    # exact members of the slit spectrum: 2 pi^2 (4th), 5 pi^2 (11th, 12th)
    assert prev[3] >= 2 * PI2 * (1 - 1e-10)
    assert np.all(prev[10:12] >= 5 * PI2 * (1 - 1e-10))


def test_unit_square_upper_bounds():
    _, A, B = pencil("unit_square", 1, rounds=1, sub=4)
    vals = smallest_eigenpairs(A, B, 6).values
    exact = np.sort([PI2 * (i * i + j * j) for i in range(1, 5) for j in range(1, 5)])[:6]
    assert np.all(vals >= exact)


def test_deterministic_and_warm_start():
    _, A, B = pencil("slit", 1, rounds=1)
    a = smallest_eigenpairs(A, B, 5)
    b = smallest_eigenpairs(A, B, 5)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.vectors, b.vectors)
    c = smallest_eigenpairs(A, B, 5, x0=a.vectors)
    assert c.iterations <= 2
    assert np.allclose(c.values, a.values, rtol=1e-12)


def test_errors():
    _, A, B = pencil("unit_square", 1, sub=4)
    with pytest.raises(ValueError):
        smallest_eigenpairs(A, B, A.shape[0] + 1)
    with pytest.raises(ValueError):
        smallest_eigenpairs(A, B, 2, tol=0.0)
    _, A, B = pencil("slit", 1, rounds=1)
    with pytest.raises(EigensolverError) as info:
        smallest_eigenpairs(A, B, 8, tol=1e-14, maxiter=2)
    assert info.value.residuals is not None and info.value.values.size == 8


def test_factorization_solves():
    _, A, _ = pencil("slit", 3)
    b = np.arange(A.shape[0], dtype=float)
    x = Factorization(A).solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert sp.issparse(A)


def test_spectral_gaps():
    vals = np.array([1.0, 2.0, 2.0, 4.0])
    lo, hi = spectral_gaps(vals, 1, 2)
    assert lo == pytest.approx(0.5) and hi == pytest.approx(1.0)
    lo, hi = spectral_gaps(vals, 0, 1)
    assert lo == 1.0 and hi == pytest.approx(1.0)
