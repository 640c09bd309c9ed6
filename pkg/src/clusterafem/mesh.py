"""Conforming triangular meshes with newest-vertex bisection.

Elements are stored as vertex triples ``(v0, v1, v2)`` in counterclockwise
order.  The refinement edge of every element is ``(v0, v1)`` and ``v2`` is
its newest vertex.  Slits (cracks) are represented by duplicated vertices:
the two faces of a slit use different vertex ids at identical coordinates,
so the edges on either side are distinct boundary edges.
"""
from functools import cached_property

import numpy as np

COORD_TOL = 1e-12

INTERIOR, OUTER, SLIT = 0, 1, 2

# local edges in storage order; edge 0 is the refinement edge
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])

DOMAINS = ("unit_square", "square2", "slit", "lshape")

# (tip, far end, side to duplicate) for the four slits of the slit domain.
# The side is (axis, sign): squares whose center has sign(center[axis]) == sign
# get the duplicated copies.
_SLITS = (
    ((0.5, 0.0), (1.0, 0.0), (1, -1)),
    ((0.0, 0.5), (0.0, 1.0), (0, -1)),
    ((-0.5, 0.0), (-1.0, 0.0), (1, -1)),
    ((0.0, -0.5), (0.0, -1.0), (0, -1)),
)


class MeshError(ValueError):
    pass


class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    p : array_like, shape (nv, 2)
        Vertex coordinates.
    t : array_like, shape (ne, 3)
        Counterclockwise vertex triples; the refinement edge is ``t[:, :2]``.
    domain : str
        Name of the domain, used for boundary classification.
    generation : array_like, optional
        Bisection depth of each element.
    parent, parent_mesh : optional
        Index of the element of ``parent_mesh`` that contains each element.
    """

    def __init__(self, p, t, domain, generation=None, parent=None, parent_mesh=None):
        self.p = np.ascontiguousarray(p, dtype=float)
        self.t = np.ascontiguousarray(t, dtype=np.int64)
        self.domain = domain
        if generation is None:
            generation = np.zeros(len(self.t), dtype=np.int64)
        self.generation = np.asarray(generation, dtype=np.int64)
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)
        self.parent_mesh = parent_mesh
        for arr in (self.p, self.t, self.generation):
            arr.setflags(write=False)
        if np.any(self.signed_area <= 0.0):
            raise MeshError("elements must be counterclockwise with positive area")

    def __repr__(self):
        return f"Mesh({self.domain!r}, nv={self.nv}, ne={self.ne})"

    @property
    def nv(self):
        return len(self.p)

    @property
    def ne(self):
        return len(self.t)

    @property
    def vertices(self):
        return self.p

    @property
    def elements(self):
        return self.t

    @cached_property
    def signed_area(self):
        a, b, c = (self.p[self.t[:, i]] for i in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    @property
    def area(self):
        return self.signed_area

    @cached_property
    def _edge_data(self):
        pairs = self.t[:, LOCAL_EDGES].reshape(-1, 2)
        keys = np.sort(pairs, axis=1)
        codes, inverse = np.unique(keys[:, 0] * self.nv + keys[:, 1], return_inverse=True)
        edges = np.column_stack([codes // self.nv, codes % self.nv])
        inverse = inverse.ravel()
        t2e = inverse.reshape(-1, 3)
        counts = np.bincount(inverse, minlength=len(edges))
        if counts.max(initial=0) > 2:
            raise MeshError("an edge is shared by more than two elements")
        e2t = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        owners = order // 3
        first = np.searchsorted(inverse[order], np.arange(len(edges)))
        e2t[:, 0] = owners[first]
        two = counts == 2
        e2t[two, 1] = owners[first[two] + 1]
        return edges, t2e, e2t

    @property
    def edges(self):
        """Unique edges as ascending vertex-id pairs, shape (nedges, 2)."""
        return self._edge_data[0]

    @property
    def t2e(self):
        """Edge index of each local edge (0-1, 1-2, 2-0), shape (ne, 3)."""
        return self._edge_data[1]

    @property
    def e2t(self):
        """Incident elements of each edge; -1 marks a missing second element."""
        return self._edge_data[2]

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.e2t[:, 1] < 0)

    @cached_property
    def edge_kind(self):
        """Per-edge flag: ``INTERIOR``, ``OUTER`` boundary or ``SLIT`` side."""
        kind = np.zeros(len(self.edges), dtype=np.int8)
        b = self.boundary_edges
        kind[b] = OUTER
        if self.domain == "slit" and b.size:
            mid = self.p[self.edges[b]].mean(axis=1)
            kind[b[_on_slit(mid)]] = SLIT
        return kind

    @cached_property
    def h(self):
        """Element diameters (longest edge length)."""
        lengths = self.edge_lengths
        return lengths[self.t2e].max(axis=1)

    @cached_property
    def edge_lengths(self):
        d = self.p[self.edges[:, 1]] - self.p[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def min_angle(self):
        """Smallest interior angle over all elements, in radians."""
        P = self.p[self.t]
        angles = []
        for i in range(3):
            u = P[:, (i + 1) % 3] - P[:, i]
            v = P[:, (i + 2) % 3] - P[:, i]
            cos = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def on_boundary(self, pts):
        """Boolean mask of points lying on the domain boundary (incl. slits)."""
        return _on_domain_boundary(self.domain, np.atleast_2d(pts))

    def check_conforming(self):
        """Audit the edge table; raise :class:`MeshError` on any defect.

        Every edge must belong to one or two elements, and an edge with a
        single element must lie on the domain boundary or a slit.  A hanging
        node would produce single-element edges in the interior.
        """
        edges, _, e2t = self._edge_data
        if np.any(e2t[:, 0] < 0):
            raise MeshError("orphan edge")
        b = self.boundary_edges
        ends = self.p[edges[b]]
        ok = self.on_boundary(ends[:, 0]) & self.on_boundary(ends[:, 1]) \
            & self.on_boundary(ends.mean(axis=1))
        if not np.all(ok):
            raise MeshError(f"{np.count_nonzero(~ok)} single-element edges in the interior")
        # geometric duplicates are only allowed on slits
        _, idx, cnt = np.unique(np.round(self.p, 10), axis=0, return_index=True,
                                return_counts=True)
        dup = self.p[idx[cnt > 1]]
        if dup.size and not (self.domain == "slit" and np.all(_on_slit(dup))):
            raise MeshError("duplicated vertices away from slits")
        return True

    def ancestors(self, coarse):
        """Index of the element of ``coarse`` containing each element of self."""
        idx = np.arange(self.ne)
        m = self
        while m is not coarse:
            if m.parent_mesh is None:
                raise MeshError("mesh is not a refinement of the given coarse mesh")
            idx = m.parent[idx]
            m = m.parent_mesh
        return idx

    def is_refinement_of(self, coarse):
        try:
            self.ancestors(coarse)
        except MeshError:
            return False
        return True

    def detach(self):
        """Copy of the mesh without the refinement history."""
        return Mesh(self.p, self.t, self.domain, self.generation)


def _on_slit(pts):
    pts = np.atleast_2d(pts)
    hit = np.zeros(len(pts), dtype=bool)
    for tip, end, _ in _SLITS:
        axis = 0 if tip[1] == 0.0 else 1
        other = 1 - axis
        lo, hi = sorted((tip[axis], end[axis]))
        hit |= (np.abs(pts[:, other]) <= COORD_TOL) \
            & (pts[:, axis] >= lo - COORD_TOL) & (pts[:, axis] <= hi + COORD_TOL)
    return hit


def _on_domain_boundary(domain, pts):
    x, y = pts[:, 0], pts[:, 1]
    if domain == "unit_square":
        lo, hi = 0.0, 1.0
    else:
        lo, hi = -1.0, 1.0
    near = lambda a, b: np.abs(a - b) <= COORD_TOL  # noqa: E731
    box = near(x, lo) | near(x, hi) | near(y, lo) | near(y, hi)
    if domain == "slit":
        return box | _on_slit(pts)
    if domain == "lshape":
        # re-entrant corner at the origin; the removed quadrant is x > 0, y < 0
        reentrant = (near(x, 0.0) & (y <= COORD_TOL)) | (near(y, 0.0) & (x >= -COORD_TOL))
        return box | reentrant
    return box


def build_initial(domain_spec, subdivisions):
    """Structured initial mesh: a grid of squares, each split into 4 triangles.

    Every triangle has the square edge opposite the square's center as its
    refinement edge, which makes the labelling compatible for bisection.

    Parameters
    ----------
    domain_spec : {"unit_square", "square2", "slit", "lshape"}
        ``unit_square`` is (0, 1)^2; the others live in (-1, 1)^2.  ``slit``
        removes four slits reaching from the boundary to distance 0.5 from
        the origin; ``lshape`` removes the quadrant (0, 1) x (-1, 0).
    subdivisions : int
        Number of squares per side.
    """
    if domain_spec not in DOMAINS:
        raise MeshError(f"unknown domain {domain_spec!r}; expected one of {DOMAINS}")
    s = int(subdivisions)
    if s < 1 or s != subdivisions:
        raise MeshError("subdivisions must be a positive integer")
    if domain_spec == "slit" and s % 4:
        raise MeshError(f"slit domain needs subdivisions divisible by 4 so that the slit "
                        f"endpoints +-0.5 are grid vertices (got {s})")
    if domain_spec == "lshape" and s % 2:
        raise MeshError("lshape needs an even number of subdivisions")

    lo, hi = (0.0, 1.0) if domain_spec == "unit_square" else (-1.0, 1.0)
    ticks = np.linspace(lo, hi, s + 1)
    X, Y = np.meshgrid(ticks, ticks, indexing="ij")
    pts = [np.column_stack([X.ravel(), Y.ravel()])]
    nv = (s + 1) ** 2
    node = lambda i, j: i * (s + 1) + j  # noqa: E731

    squares = []
    for i in range(s):
        for j in range(s):
            cx, cy = 0.5 * (ticks[i] + ticks[i + 1]), 0.5 * (ticks[j] + ticks[j + 1])
            if domain_spec == "lshape" and cx > 0 and cy < 0:
                continue
            squares.append((i, j, cx, cy))

    duplicates = {}
    extra = []

    def copy_of(n):
        if n not in duplicates:
            duplicates[n] = nv + len(extra)
            extra.append(pts[0][n])
        return duplicates[n]

    tris = []
    centers = []
    for i, j, cx, cy in squares:
        corners = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]
        grid = list(corners)
        if domain_spec == "slit":
            for tip, end, (axis, sign) in _SLITS:
                if np.sign((cx, cy)[axis]) != sign:
                    continue
                for k, n in enumerate(grid):
                    q = pts[0][n]
                    if _same_slit(q, tip, end) and not np.allclose(q, tip, atol=COORD_TOL):
                        corners[k] = copy_of(n)
        centers.append((cx, cy))
        tris.append(corners)

    p = np.vstack([pts[0]] + ([np.array(extra)] if extra else []))
    ncenter0 = len(p)
    p = np.vstack([p, np.array(centers)])
    t = []
    for k, corners in enumerate(tris):
        c = ncenter0 + k
        for a in range(4):
            t.append((corners[a], corners[(a + 1) % 4], c))
    t = np.array(t, dtype=np.int64)

    # drop grid nodes not used by any element (lshape removed quadrant)
    used = np.zeros(len(p), dtype=bool)
    used[t.ravel()] = True
    renum = -np.ones(len(p), dtype=np.int64)
    renum[used] = np.arange(np.count_nonzero(used))
    return Mesh(p[used], renum[t], domain_spec)


def _same_slit(q, tip, end):
    axis = 0 if tip[1] == 0.0 else 1
    lo, hi = sorted((tip[axis], end[axis]))
    return abs(q[1 - axis]) <= COORD_TOL and lo - COORD_TOL <= q[axis] <= hi + COORD_TOL


def refine(mesh, marked):
    """Bisect every marked element at least once and close conformingly.

    The closure is recursive: before an element is bisected, the neighbour
    across its refinement edge is refined until it shares that edge as its
    own refinement edge, and then both are bisected together.

    Returns a new :class:`Mesh` whose ``parent`` entries index ``mesh``.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.ne:
        raise IndexError("marked element id out of range")

    ne0, nv0 = mesh.ne, mesh.nv
    t0 = mesh.t
    codes = mesh.edges[:, 0] * nv0 + mesh.edges[:, 1]
    e2t0 = mesh.e2t
    new_pts = []
    tri = {}                 # element id -> vertex triple, for touched/new elements
    gen = {}
    origin = {}
    dead = set()
    overlay = {}             # edge key -> elements created during this call
    midpoint = {}

    def key(u, v):
        return (u, v) if u < v else (v, u)

    def verts(e):
        if e < ne0:
            return tuple(t0[e].tolist())
        return tri[e]

    def point(v):
        return mesh.p[v] if v < nv0 else new_pts[v - nv0]

    def bisect(e):
        a, b, c = verts(e)
        k = key(a, b)
        m = midpoint.get(k)
        if m is None:
            pa, pb = point(a), point(b)
            m = nv0 + len(new_pts)
            new_pts.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
            midpoint[k] = m
        dead.add(e)
        g = gen[e] if e >= ne0 else int(mesh.generation[e])
        o = origin[e] if e >= ne0 else e
        for child in ((c, a, m), (b, c, m)):
            f = ne0 + len(tri)
            tri[f] = child
            gen[f] = g + 1
            origin[f] = o
            u, v, w = child
            for x, y in ((u, v), (v, w), (w, u)):
                overlay.setdefault(key(x, y), []).append(f)

    def neighbour(e, k):
        for f in overlay.get(k, ()):
            if f != e and f not in dead:
                return f
        if k[0] < nv0 and k[1] < nv0:
            code = k[0] * nv0 + k[1]
            i = np.searchsorted(codes, code)
            if i < len(codes) and codes[i] == code:
                for f in e2t0[i].tolist():
                    if f >= 0 and f != e and f not in dead:
                        return f
        return None

    def refine_element(e):
        a, b, _ = verts(e)
        k = key(a, b)
        f = neighbour(e, k)
        if f is not None and key(*verts(f)[:2]) != k:
            refine_element(f)
            f = neighbour(e, k)
            if key(*verts(f)[:2]) != k:
                raise MeshError("incompatible refinement edges; closure failed")
        bisect(e)
        if f is not None:
            bisect(f)

    for e in marked.tolist():
        if e not in dead:
            refine_element(e)

    keep0 = np.ones(ne0, dtype=bool)
    keep0[[e for e in dead if e < ne0]] = False
    kept_new = [f for f in sorted(tri) if f not in dead]
    t = np.vstack([t0[keep0], np.array([tri[f] for f in kept_new], dtype=np.int64)])
    p = np.vstack([mesh.p, np.array(new_pts)])
    generation = np.concatenate([mesh.generation[keep0],
                                 np.array([gen[f] for f in kept_new], dtype=np.int64)])
    parent = np.concatenate([np.flatnonzero(keep0),
                             np.array([origin[f] for f in kept_new], dtype=np.int64)])
    return Mesh(p, t, mesh.domain, generation=generation, parent=parent, parent_mesh=mesh)


def uniform_refine(mesh, rounds=1):
    """Refine all elements ``2 * rounds`` times (each round halves ``h``)."""
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    for _ in range(2 * rounds):
        mesh = refine(mesh, np.arange(mesh.ne))
    return mesh


def write_mesh(mesh, path):
    """Plain-text dump: ``nv ne``, then ``x y`` lines, then ``v0 v1 v2`` lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.nv} {mesh.ne}\n")
        for x, y in mesh.p:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.t:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path, domain):
    with open(path) as fh:
        nv, ne = (int(v) for v in fh.readline().split())
        p = np.loadtxt(fh, max_rows=nv, ndmin=2)
        t = np.loadtxt(fh, max_rows=ne, dtype=np.int64, ndmin=2)
    return Mesh(p, t, domain)
