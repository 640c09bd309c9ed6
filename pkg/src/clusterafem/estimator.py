"""Residual indicators for eigenvalue clusters.

For discrete eigenpairs ``(u_j, lam_j)`` the squared indicator of an element
``T`` is::

    eta(T)^2 = sum_j  h_T^2 ||Lap u_j + lam_j u_j||_T^2
                    + h_T   ||[grad u_j]||_{dT}^2

The jump term runs over the interior edges of ``T``; each edge is counted in
both neighbouring elements.  Boundary and slit edges contribute nothing.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fe_space import _REF_VERTS
from .mesh import LOCAL_EDGES
from .quadrature import gauss_interval, quadrature


@dataclass
class IndicatorField:
    """Per-element squared indicators, split into volume and jump parts."""

    volume: np.ndarray
    jump: np.ndarray

    @property
    def values(self):
        return self.volume + self.jump

    @property
    def total(self):
        return float(np.sum(self.values))

    def __len__(self):
        return self.volume.size


def edge_rule(degree):
    """Gauss rule on edges exact for the degree-``2r`` jump integrand."""
    return gauss_interval(-(-(2 * degree + 1) // 2))


@lru_cache(maxsize=None)
def _edge_points(degree):
    """Reference points of the edge rule on local edge ``k``, walked forward
    (``flip=0``) or backward (``flip=1``); shape (3, 2, nq, 2)."""
    t, _ = edge_rule(degree)
    out = np.empty((3, 2, t.size, 2))
    for k, (i, j) in enumerate(LOCAL_EDGES):
        a, b = _REF_VERTS[i], _REF_VERTS[j]
        out[k, 0] = a + t[:, None] * (b - a)
        out[k, 1] = b + t[:, None] * (a - b)
    return out


def volume_fields(space, Z, W):
    """Values of ``Lap z_j + w_j`` at the order-``2r`` points, shape (ne, nq, N).

    ``Z`` and ``W`` are full coefficient arrays (ndofs, N).
    """
    r = space.degree
    rule = quadrature(2 * r)
    _, inv, _ = space.maps
    el = space.element
    res = np.einsum("qi,eij->eqj", el.values(rule.xi), W[space.dofs])
    if r > 1:
        href = el.hessians(rule.xi)                      # (q, i, a, b)
        GGt = np.einsum("eac,ebc->eab", inv, inv)
        lap = np.einsum("qiab,eab->eqi", href, GGt)
        res += np.einsum("eqi,eij->eqj", lap, Z[space.dofs])
    return rule, res


def _volume_terms(space, Z, W):
    """``int_T (Lap z_j + w_j)^2`` summed over j, per element."""
    rule, res = volume_fields(space, Z, W)
    area = space.mesh.area
    return area * np.einsum("q,eqj->e", rule.weights, res ** 2)


def _edge_gradients(space, Zl, elems, local_edge):
    """Physical gradients of ``z_j`` at the edge points of the given
    (element, local edge) pairs, walked from the lower to the higher global
    vertex id; shape (nedges, nq, N, 2)."""
    mesh = space.mesh
    pts = _edge_points(space.degree)
    _, inv, _ = space.maps
    i, j = LOCAL_EDGES[local_edge].T
    flip = (mesh.t[elems, i] > mesh.t[elems, j]).astype(int)
    out = None
    for k in range(3):
        for f in range(2):
            sel = np.flatnonzero((local_edge == k) & (flip == f))
            if sel.size == 0:
                continue
            gref = space.element.gradients(pts[k, f])    # (q, i, a)
            e = elems[sel]
            g = np.einsum("eab,qia,eij->eqjb", inv[e], gref, Zl[e])
            if out is None:
                out = np.empty((elems.size,) + g.shape[1:])
            out[sel] = g
    return out


def jump_fields(space, Z):
    """Gradient jumps of ``z_j`` across interior edges.

    Returns ``(edges, jumps)`` with the interior edge ids and the jumps at the
    edge rule points, shape (nedges, nq, N, 2).
    """
    mesh = space.mesh
    interior = np.flatnonzero(mesh.e2t[:, 1] >= 0)
    nq = edge_rule(space.degree)[0].size
    if interior.size == 0:
        return interior, np.zeros((0, nq, Z.shape[1], 2))
    Zl = Z[space.dofs]
    sides = []
    for s in range(2):
        e = mesh.e2t[interior, s]
        k = np.argmax(mesh.t2e[e] == interior[:, None], axis=1)
        sides.append(_edge_gradients(space, Zl, e, k))
    return interior, sides[0] - sides[1]


def _jump_terms(space, Z):
    """Per interior edge: ``sum_j ||[grad z_j]||_E^2``; and the edge ids."""
    edges, jump = jump_fields(space, Z)
    _, w = edge_rule(space.degree)
    sq = np.einsum("q,eqjb->e", w, jump ** 2) * space.mesh.edge_lengths[edges]
    return edges, sq


def residual_indicators(space, Z, W):
    """Indicators of the fields ``Lap z_j + w_j`` and ``[grad z_j]``.

    ``Z`` and ``W`` are full coefficient arrays of shape (ndofs, N), or
    free-dof arrays of shape (dim, N).
    """
    Z = _full(space, Z)
    W = _full(space, W)
    if Z.shape != W.shape:
        raise ValueError("coefficient arrays must have matching shapes")
    mesh = space.mesh
    h = mesh.h
    vol = h ** 2 * _volume_terms(space, Z, W)
    edges, sq = _jump_terms(space, Z)
    jump = np.zeros(mesh.ne)
    np.add.at(jump, mesh.e2t[edges, 0], sq)
    np.add.at(jump, mesh.e2t[edges, 1], sq)
    return IndicatorField(vol, h * jump)


def _full(space, C):
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[0] == space.ndofs:
        return C
    if C.shape[0] != space.dim:
        raise ValueError(f"coefficient length {C.shape[0]} does not match the space "
                         f"(dim {space.dim}, ndofs {space.ndofs})")
    return space.expand(C)


def eta_indicators(space, cluster):
    """Computable cluster indicators from discrete eigenpairs.

    ``cluster`` is an :class:`EigenCluster` already restricted to the target
    index set.
    """
    U = np.asarray(cluster.vectors)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[0] != space.dim:
        raise ValueError(f"eigenvectors have length {U.shape[0]}, space dim is {space.dim}")
    return residual_indicators(space, U, U * cluster.values)
