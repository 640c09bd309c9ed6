"""Stiffness and mass matrices on the free dofs of a Lagrange space."""
import numpy as np
import scipy.sparse as sp

from .quadrature import quadrature


def element_stiffness(space):
    """Element matrices of ``a(u, v) = int grad u . grad v``, shape (ne, nloc, nloc)."""
    r = space.degree
    rule = quadrature(max(2 * (r - 1), 1))
    _, inv, det = space.maps
    gref = space.element.gradients(rule.xi)                 # (q, i, a)
    # physical gradient: grad_x = J^{-T} grad_xi
    G = np.einsum("eab,qia->eqib", inv, gref)
    K = np.einsum("q,eqib,eqjb->eij", rule.weights, G, G) * (0.5 * np.abs(det))[:, None, None]
    return 0.5 * (K + K.transpose(0, 2, 1))


def element_mass(space):
    """Element matrices of ``(u, v) = int u v``, shape (ne, nloc, nloc)."""
    rule = quadrature(2 * space.degree)
    _, _, det = space.maps
    phi = space.element.values(rule.xi)
    Mref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    return (0.5 * np.abs(det))[:, None, None] * Mref[None]


def _scatter(space, Ke, free_only):
    rows = np.repeat(space.dofs, space.nloc, axis=1).ravel()
    cols = np.tile(space.dofs, (1, space.nloc)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(space.ndofs, space.ndofs)).tocsr()
    A.sum_duplicates()
    if free_only:
        idx = np.flatnonzero(space.free)
        A = A[idx][:, idx]
    A.sort_indices()
    return A


def assemble_stiffness(space, free_only=True):
    """Stiffness matrix as CSR; Dirichlet rows and columns are removed."""
    return _scatter(space, element_stiffness(space), free_only)


def assemble_mass(space, free_only=True):
    """Mass matrix as CSR; Dirichlet rows and columns are removed."""
    return _scatter(space, element_mass(space), free_only)


def write_coo(A, path):
    """Write ``i j value`` lines (0-based), sorted by row then column."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for i, j, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_coo(path, shape):
    data = np.loadtxt(path, ndmin=2)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape)
