import numpy as np
import pytest
import sympy as sy

from _oracles import symbolic_element_matrices
from clusterafem.assembly import (assemble_mass, assemble_stiffness, element_mass,
                                  element_stiffness, read_coo, write_coo)
from clusterafem.fe_space import build_space, prolongation
from clusterafem.mesh import Mesh, build_initial, refine, uniform_refine

TRIANGLE = ((0, 0), (2, sy.Rational(1, 2)), (sy.Rational(1, 3), sy.Rational(3, 2)))


def single_element(verts):
    p = np.array([[float(a) for a in v] for v in verts])
    return Mesh(p, np.array([[0, 1, 2]]), "unit_square")


@pytest.mark.parametrize("r", [1, 2, 3])
def test_element_matrices_match_symbolic_integration(r):
    K, M = symbolic_element_matrices(TRIANGLE, r)
    V = build_space(single_element(TRIANGLE), r)
    assert np.abs(element_stiffness(V)[0] - K).max() <= 1e-12 * np.abs(K).max()
    assert np.abs(element_mass(V)[0] - M).max() <= 1e-12 * np.abs(M).max()


def test_p1_mass_closed_form():
    V = build_space(single_element(TRIANGLE), 1)
    S = float(V.mesh.area[0])
    Me = element_mass(V)[0]
    assert np.allclose(Me, S / 12 * (np.ones((3, 3)) + np.eye(3)))
    assert np.allclose(Me.sum(axis=1), S / 3)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_mass_of_constant_and_symmetry(r):
    m = refine(build_initial("unit_square", 2), [0, 5])
    V = build_space(m, r)
    B = assemble_mass(V, free_only=False)
    A = assemble_stiffness(V, free_only=False)
    one = V.interpolate(lambda x, y: 1.0, constrained=True)
    assert abs(one @ B @ one - 1.0) < 1e-13
    assert np.abs(A @ one).max() < 1e-12
    assert abs(A - A.T).max() <= 1e-15 * abs(A).max()
    assert abs(B - B.T).max() <= 1e-15 * abs(B).max()


POLYS = {
    1: lambda x, y: 3 * x - 2 * y + 1,
    2: lambda x, y: x ** 2 + 3 * x * y - y,
    3: lambda x, y: x ** 3 - 2 * x * y ** 2 + y ** 2 - x,
}


@pytest.mark.parametrize("r", [1, 2, 3])
def test_galerkin_consistency_for_polynomials(r):
    x, y = sy.symbols("x y")
    p = POLYS[r](x, y)
    energy = float(sy.integrate(sy.diff(p, x) ** 2 + sy.diff(p, y) ** 2, (x, 0, 1), (y, 0, 1)))
    l2 = float(sy.integrate(p ** 2, (x, 0, 1), (y, 0, 1)))
    m = refine(build_initial("unit_square", 2), [1, 2, 9])
    V = build_space(m, r)
    c = V.interpolate(POLYS[r], constrained=True)
    A = assemble_stiffness(V, free_only=False)
    B = assemble_mass(V, free_only=False)
    assert abs(c @ A @ c - energy) <= 1e-12 * energy
    assert abs(c @ B @ c - l2) <= 1e-12 * l2


@pytest.mark.parametrize("domain", ["slit", "lshape"])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_prolongation_galerkin_identity(domain, r):
    m = build_initial(domain, 4)
    f = uniform_refine(refine(m, np.arange(0, m.ne, 5)), 1)
    Vc, Vf = build_space(m, r), build_space(f, r)
    P = prolongation(Vc, Vf)
    for assemble in (assemble_stiffness, assemble_mass):
        Ac, Af = assemble(Vc), assemble(Vf)
        D = P.T @ Af @ P - Ac
        assert abs(D).max() <= 1e-10 * abs(Ac).max()


def test_matrices_are_spd_on_free_dofs():
    V = build_space(build_initial("slit", 4), 2)
    for M in (assemble_stiffness(V), assemble_mass(V)):
        assert M.shape == (V.dim, V.dim)
        assert np.linalg.eigvalsh(M.toarray()).min() > 0


def test_coo_round_trip(tmp_path):
    V = build_space(build_initial("slit", 4), 1)
    A = assemble_stiffness(V)
    path = tmp_path / "A.coo"
    write_coo(A, path)
    rows = [tuple(map(float, line.split()[:2])) for line in path.read_text().splitlines()]
    assert rows == sorted(rows)
    back = read_coo(path, A.shape)
    assert abs(back - A).max() == 0
