"""Continuous Lagrange spaces of degree 1-3 with homogeneous Dirichlet data.

Local node order on an element: the three vertices, then ``r - 1`` nodes on
each of the edges (0-1), (1-2), (2-0), then the interior node (``r = 3``).
Globally, vertex dofs come first, then edge dofs (ordered from the lower to
the higher global vertex id of the edge), then interior dofs.
"""
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, Mesh

DEGREES = (1, 2, 3)

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class ReferenceElement:
    """Equispaced Lagrange basis on the reference triangle.

    The basis is expanded in monomials ``x**a * y**b`` (``a + b <= r``); the
    coefficient matrix is the inverse of the Vandermonde matrix at the nodes.
    """

    def __init__(self, degree):
        if degree not in DEGREES:
            raise ValueError(f"unsupported degree {degree!r}; expected one of {DEGREES}")
        self.degree = r = degree
        self.exponents = np.array([(a, n - a) for n in range(r + 1) for a in range(n, -1, -1)])
        self.nodes = self._nodes()
        self.nloc = len(self.nodes)
        self.coef = np.linalg.inv(self._monomials(self.nodes))

    def _nodes(self):
        r = self.degree
        nodes = list(_REF_VERTS)
        for i, j in LOCAL_EDGES:
            for k in range(1, r):
                nodes.append(_REF_VERTS[i] + k / r * (_REF_VERTS[j] - _REF_VERTS[i]))
        if r == 3:
            nodes.append(np.array([1.0, 1.0]) / 3.0)
        return np.array(nodes)

    def _monomials(self, xi, dx=0, dy=0):
        xi = np.atleast_2d(xi)
        out = np.zeros((len(xi), len(self.exponents)))
        for m, (a, b) in enumerate(self.exponents):
            if a < dx or b < dy:
                continue
            ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1.0
            cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1.0
            out[:, m] = ca * cb * xi[:, 0] ** (a - dx) * xi[:, 1] ** (b - dy)
        return out

    def values(self, xi):
        """Basis values, shape ``(npts, nloc)``."""
        return self._monomials(xi) @ self.coef

    def gradients(self, xi):
        """Reference gradients, shape ``(npts, nloc, 2)``."""
        gx = self._monomials(xi, 1, 0) @ self.coef
        gy = self._monomials(xi, 0, 1) @ self.coef
        return np.stack([gx, gy], axis=-1)

    def hessians(self, xi):
        """Reference Hessians, shape ``(npts, nloc, 2, 2)``."""
        hxx = self._monomials(xi, 2, 0) @ self.coef
        hxy = self._monomials(xi, 1, 1) @ self.coef
        hyy = self._monomials(xi, 0, 2) @ self.coef
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def reference_element(degree):
    return ReferenceElement(degree)


def affine_maps(mesh):
    """Jacobians ``J`` (ne, 2, 2) with columns ``p1 - p0``, ``p2 - p0``, and
    their inverses and determinants."""
    P = mesh.p[mesh.t]
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    return J, inv, det


class FeSpace:
    """Lagrange space of degree ``r`` on ``mesh`` with Dirichlet dofs removed.

    Attributes
    ----------
    dofs : ndarray, shape (ne, nloc)
        Global (unconstrained) dof ids of each element.
    free : ndarray of bool, shape (ndofs,)
        False on the outer boundary and on both faces of every slit.
    free_index : ndarray, shape (ndofs,)
        Position of each global dof among the free dofs, -1 if constrained.
    """

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = r = int(degree)
        self.element = reference_element(r)
        nv, ne, ned = mesh.nv, mesh.ne, len(mesh.edges)
        self.ndofs = nv + (r - 1) * ned + (ne if r == 3 else 0)

        cols = [mesh.t]
        if r > 1:
            for k, (i, j) in enumerate(LOCAL_EDGES):
                e = mesh.t2e[:, k]
                forward = mesh.t[:, i] < mesh.t[:, j]
                steps = np.arange(r - 1)
                local = np.where(forward[:, None], steps, r - 2 - steps)
                cols.append(nv + (r - 1) * e[:, None] + local)
        if r == 3:
            cols.append((nv + 2 * ned + np.arange(ne))[:, None])
        self.dofs = np.hstack(cols)

        free = np.ones(self.ndofs, dtype=bool)
        b = mesh.boundary_edges
        free[mesh.edges[b].ravel()] = False
        if r > 1:
            free[(nv + (r - 1) * b[:, None] + np.arange(r - 1)).ravel()] = False
        self.free = free
        self.free_index = np.full(self.ndofs, -1, dtype=np.int64)
        self.free_index[free] = np.arange(np.count_nonzero(free))
        for arr in (self.dofs, self.free, self.free_index):
            arr.setflags(write=False)

    def __repr__(self):
        return f"FeSpace(P{self.degree}, {self.mesh!r}, dim={self.dim})"

    @property
    def dim(self):
        return int(np.count_nonzero(self.free))

    @property
    def nloc(self):
        return self.element.nloc

    @cached_property
    def maps(self):
        return affine_maps(self.mesh)

    @cached_property
    def node_coords(self):
        """Physical coordinates of every global dof node, shape (ndofs, 2)."""
        J, _, _ = self.maps
        x0 = self.mesh.p[self.mesh.t[:, 0]]
        X = x0[:, None, :] + np.einsum("eab,nb->ena", J, self.element.nodes)
        out = np.empty((self.ndofs, 2))
        out[self.dofs.ravel()] = X.reshape(-1, 2)
        return out

    def interpolate(self, f, constrained=False):
        """Nodal interpolant of ``f(x, y)``.

        Returns free-dof coefficients, or all ``ndofs`` coefficients (without
        imposing the boundary condition) when ``constrained`` is True.
        """
        X = self.node_coords
        vals = np.asarray(f(X[:, 0], X[:, 1]), dtype=float) * np.ones(self.ndofs)
        return vals if constrained else vals[self.free]

    def expand(self, c):
        """Zero-extend free coefficients (``(dim,)`` or ``(dim, k)``) to all dofs."""
        c = np.asarray(c)
        out = np.zeros((self.ndofs,) + c.shape[1:], dtype=c.dtype)
        out[self.free] = c
        return out

    def local(self, c):
        """Element-local coefficients ``(ne, nloc, ...)`` of a full or free vector."""
        c = np.asarray(c)
        if c.shape[0] == self.dim and self.dim != self.ndofs:
            c = self.expand(c)
        return c[self.dofs]

    def evaluate(self, c, elements, xi):
        """Evaluate at reference points ``xi`` (npts, 2) of the given elements.

        ``elements`` has shape (npts,); returns values of shape (npts, ...).
        """
        cl = self.local(c)[np.asarray(elements)]
        phi = self.element.values(xi)
        return np.einsum("pi,pi...->p...", phi, cl)

    def locate(self, pts, candidates=None):
        """Element and reference coordinates of physical points (brute force)."""
        pts = np.atleast_2d(pts)
        J, inv, _ = self.maps
        x0 = self.mesh.p[self.mesh.t[:, 0]]
        elems = np.full(len(pts), -1, dtype=np.int64)
        xis = np.zeros((len(pts), 2))
        ids = np.arange(self.mesh.ne) if candidates is None else np.asarray(candidates)
        for n, x in enumerate(pts):
            xi = np.einsum("eab,eb->ea", inv[ids], x - x0[ids])
            lam = np.column_stack([1 - xi.sum(1), xi])
            inside = np.flatnonzero(lam.min(axis=1) >= -1e-12)
            if inside.size:
                elems[n] = ids[inside[0]]
                xis[n] = xi[inside[0]]
        return elems, xis


def build_space(mesh, r):
    """Lagrange space of degree ``r`` on ``mesh``."""
    if r not in DEGREES:
        raise ValueError(f"unsupported degree {r!r}; expected one of {DEGREES}")
    return FeSpace(mesh, r)


def prolongation(coarse, fine):
    """Sparse matrix mapping coarse free coefficients to fine free coefficients.

    Column ``j`` holds the fine interpolant of coarse basis function ``j``; since
    the spaces are nested this reproduces coarse functions exactly.
    """
    if coarse.degree != fine.degree:
        raise ValueError("prolongation needs equal polynomial degrees")
    if fine.mesh is coarse.mesh:
        return sp.identity(coarse.dim, format="csr")
    anc = fine.mesh.ancestors(coarse.mesh)

    # one owning element per fine dof
    owner = np.empty(fine.ndofs, dtype=np.int64)
    slot = np.empty(fine.ndofs, dtype=np.int64)
    owner[fine.dofs.ravel()[::-1]] = np.repeat(np.arange(fine.mesh.ne), fine.nloc)[::-1]
    slot[fine.dofs.ravel()[::-1]] = np.tile(np.arange(fine.nloc), fine.mesh.ne)[::-1]
    rows = np.flatnonzero(fine.free)
    K = anc[owner[rows]]
    X = fine.node_coords[rows]

    _, inv, _ = coarse.maps
    x0 = coarse.mesh.p[coarse.mesh.t[K, 0]]
    xi = np.einsum("nab,nb->na", inv[K], X - x0)
    phi = coarse.element.values(xi)                      # (nrows, nloc)
    cols = coarse.free_index[coarse.dofs[K]]             # (nrows, nloc)
    keep = (np.abs(phi) > 1e-12) & (cols >= 0)
    r_idx = np.repeat(fine.free_index[rows], coarse.nloc).reshape(phi.shape)
    P = sp.csr_matrix((phi[keep], (r_idx[keep], cols[keep])), shape=(fine.dim, coarse.dim))
    return P
