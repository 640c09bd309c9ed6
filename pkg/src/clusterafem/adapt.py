"""Doerfler marking and the solve -> estimate -> mark -> refine loop."""
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import assemble_mass, assemble_stiffness
from .eigensolver import (DEFAULT_SEED, DEFAULT_TOL, EigensolverError,
                          smallest_eigenpairs, spectral_gaps)
from .estimator import eta_indicators
from .fe_space import build_space, prolongation
from .mesh import build_initial, refine

log = logging.getLogger(__name__)

GAP_WARN = 1e-6


class ClusterSeparationWarning(UserWarning):
    pass


class AfemError(RuntimeError):
    """Adaptive loop aborted; ``history`` holds the completed iterations."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def doerfler_mark(indicators, theta):
    """Smallest set of elements carrying a ``theta`` fraction of the total.

    Elements are sorted by decreasing indicator (ties by ascending id) and the
    shortest prefix meeting the bulk criterion is returned.  A zero total
    returns an empty set.

    Parameters
    ----------
    indicators : IndicatorField or array_like
        Squared element indicators.
    theta : float in (0, 1]
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta2 = np.asarray(getattr(indicators, "values", indicators), dtype=float)
    if np.any(eta2 < 0):
        raise ValueError("indicators must be nonnegative")
    order = np.lexsort((np.arange(eta2.size), -eta2))
    if eta2.size == 0 or not np.any(eta2 > 0):
        return np.zeros(0, dtype=np.int64)
    if theta == 1.0:
        return np.sort(order[eta2[order] > 0])
    csum = np.cumsum(eta2[order])
    n = int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1
    return np.sort(order[:min(n, eta2.size)])


@dataclass
class AfemConfig:
    """Parameters of an adaptive run; the target cluster is ``n+1 .. n+N``."""

    domain: str = "unit_square"
    degree: int = 1
    n: int = 0
    N: int = 1
    theta: float = 0.5
    max_dofs: int = 5000
    tol: float = DEFAULT_TOL
    buffer: int = None
    subdivisions: int = 4
    eta_tol: float = None
    max_iterations: int = 200
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.N < 1 or self.n < 0:
            raise ValueError("need n >= 0 and N >= 1")

    @property
    def cluster(self):
        """0-based positions of the target eigenvalues."""
        return np.arange(self.n, self.n + self.N)

    @property
    def nwanted(self):
        # one extra pair for the upper gap diagnostic
        return self.n + self.N + 1


@dataclass
class IterationRecord:
    iteration: int
    n_elements: int
    n_dofs: int
    eta_total: float
    eigenvalues: list
    gap_low: float
    gap_high: float
    wall_time: float
    n_marked: int = 0

    @property
    def cluster_values(self):
        return self.eigenvalues


@dataclass
class ConvergenceHistory:
    config: AfemConfig
    records: list = field(default_factory=list)
    mesh: object = None
    space: object = None
    cluster: object = None
    status: str = "running"

    def __len__(self):
        return len(self.records)

    @property
    def dofs(self):
        return np.array([r.n_dofs for r in self.records])

    @property
    def eta(self):
        return np.array([r.eta_total for r in self.records])

    @property
    def eigenvalues(self):
        """Array (iterations, n + N) of the first ``n + N`` discrete eigenvalues."""
        return np.array([r.eigenvalues for r in self.records])

    def as_dict(self):
        return {"config": asdict(self.config), "records": [asdict(r) for r in self.records],
                "status": self.status}


def run_afem(config, mesh=None, callback=None):
    """Adaptive loop until the number of free dofs exceeds ``config.max_dofs``.

    The first ``n + N + 1`` eigenpairs are computed on every level, the
    indicators are summed over the target cluster only, and the previous
    level's eigenvectors (prolongated) seed the next eigensolve.
    """
    cfg = config
    if mesh is None:
        mesh = build_initial(cfg.domain, cfg.subdivisions)
    hist = ConvergenceHistory(cfg)
    x0 = None
    prev_space = None
    for it in range(cfg.max_iterations):
        t0 = time.perf_counter()
        space = build_space(mesh, cfg.degree)
        if space.dim < cfg.nwanted:
            raise ValueError(f"initial space has dimension {space.dim} < {cfg.nwanted} "
                             f"wanted eigenpairs; refine the initial mesh")
        A = assemble_stiffness(space)
        B = assemble_mass(space)
        if prev_space is not None:
            x0 = prolongation(prev_space, space) @ hist.cluster.vectors
        try:
            eig = smallest_eigenpairs(A, B, cfg.nwanted, cfg.tol, buffer=cfg.buffer,
                                      x0=x0, seed=cfg.seed)
        except EigensolverError as exc:
            hist.status = "eigensolver_failed"
            raise AfemError(f"iteration {it}: {exc}", hist) from exc
        gap_low, gap_high = spectral_gaps(eig.values, cfg.n, cfg.N)
        if min(gap_low, gap_high) < GAP_WARN:
            warnings.warn(f"iteration {it}: discrete cluster gaps {gap_low:.2e}, "
                          f"{gap_high:.2e} below {GAP_WARN:g}", ClusterSeparationWarning)
        ind = eta_indicators(space, eig.select(cfg.cluster))
        rec = IterationRecord(it, mesh.ne, space.dim, float(np.sqrt(ind.total)),
                              eig.values[:cfg.n + cfg.N].tolist(), gap_low, gap_high, 0.0)
        hist.records.append(rec)
        hist.mesh, hist.space, hist.cluster = mesh, space, eig

        done = space.dim > cfg.max_dofs or (cfg.eta_tol is not None
                                              and rec.eta_total <= cfg.eta_tol)
        if not done:
            marked = doerfler_mark(ind, cfg.theta)
            if marked.size == 0:
                done = True
            else:
                rec.n_marked = int(marked.size)
                # drop older levels; the detached copy has identical numbering
                base = mesh.detach()
                prev_space = build_space(base, cfg.degree)
                mesh = refine(base, marked)
        rec.wall_time = time.perf_counter() - t0
        log.info("it=%d ne=%d dofs=%d eta=%.4e lam=%s (%.2fs)", it, rec.n_elements,
                 rec.n_dofs, rec.eta_total, np.array2string(np.asarray(rec.eigenvalues),
                                                            precision=6), rec.wall_time)
        if callback is not None:
            callback(rec)
        if done:
            break
    hist.status = "completed"
    return hist
