"""Quadrature rules on the reference triangle and the unit interval.

The reference triangle has vertices (0, 0), (1, 0), (0, 1).  Triangle rules
are returned in barycentric form with weights normalized to sum to one, so
``area * sum(w * f(x_q))`` integrates ``f`` over a physical triangle.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_ORDER = 8


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates ``(nq, 3)`` and weights ``(nq,)``."""

    points: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def xi(self):
        """Reference coordinates ``(nq, 2)`` of the points."""
        return self.points[:, 1:]

    def __len__(self):
        return self.weights.size


@lru_cache(maxsize=None)
def quadrature(order):
    """Return a rule on the reference triangle exact up to total degree ``order``.

    Order 0 and 1 give the centroid rule, order 2 the three-point edge-midpoint
    free rule of Strang and Fix; higher orders use a collapsed Gauss-Jacobi
    product rule, which has strictly positive weights.
    """
    if not isinstance(order, (int, np.integer)) or order < 0 or order > MAX_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r} (0..{MAX_ORDER})")
    if order <= 1:
        pts = np.array([[1.0, 1.0, 1.0]]) / 3.0
        wts = np.array([1.0])
    elif order == 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
        wts = np.full(3, 1.0 / 3.0)
    else:
        # x = s, y = t (1 - s); the Jacobian (1 - s) is absorbed by a
        # Gauss-Jacobi(alpha=1) rule in s.
        n = (order + 2) // 2
        s, ws = roots_jacobi(n, 1.0, 0.0)
        t, wt = np.polynomial.legendre.leggauss(n)
        s = 0.5 * (s + 1.0)
        t = 0.5 * (t + 1.0)
        ws = ws / 4.0
        wt = wt / 2.0
        S, T = np.meshgrid(s, t, indexing="ij")
        x = S.ravel()
        y = (T * (1.0 - S)).ravel()
        wts = np.outer(ws, wt).ravel() * 2.0
        pts = np.column_stack([1.0 - x - y, x, y])
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, int(order))


@lru_cache(maxsize=None)
def gauss_interval(npoints):
    """Gauss-Legendre points and weights on ``[0, 1]`` (weights sum to one)."""
    t, w = np.polynomial.legendre.leggauss(int(npoints))
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w
