"""Two-level check of the equivalence between the computable indicator eta
and the theoretical indicator mu.

A uniformly refined space ``V_fine`` stands in for H^1_0: since the coarse
space is contained in it, the fine cluster eigenpairs ``(lt_j, ut_j)`` satisfy
every identity the continuous eigenpairs do when tested against coarse
functions.  The coarse operators are

* ``G``      Ritz projection onto V_coarse,
* ``P_c``    L2 projection onto the span W_c of the coarse cluster vectors,
* ``Lam``    ``P_c o G``,

and the alignment matrix is ``M[j, m] = (Lam ut_j, u_m)``.  With
``eps = max_j ||ut_j - Lam ut_j||`` below ``sqrt(1 + 1/(2N)) - 1`` the Gram
matrix ``B = M M^T`` has diagonal entries in ``[(2N-1)/2N, (2N+1)/2N]`` and
off-diagonal row sums at most ``(N-1)/2N``, so its spectrum lies in
``[1/2, 3/2]`` and ``1/2 <= mu(T)^2 / eta(T)^2 <= 3/2`` on every element.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .assembly import assemble_mass, assemble_stiffness
from .eigensolver import DEFAULT_TOL, EigenCluster, Factorization, smallest_eigenpairs
from .estimator import (_full, edge_rule, eta_indicators, jump_fields,
                        residual_indicators, volume_fields)
from .fe_space import build_space, prolongation
from .mesh import build_initial, uniform_refine

SLACK = 1e-9
RATIO_SLACK = 1e-8


def fineness_threshold(N):
    """Largest admissible ``eps`` for a cluster of size ``N``."""
    return float(np.sqrt(1.0 + 1.0 / (2.0 * N)) - 1.0)


def gershgorin_bounds(N):
    """``(diag_lo, diag_hi, offdiag_max, sigma_lo, sigma_hi)`` for size ``N``."""
    return ((2 * N - 1) / (2 * N), (2 * N + 1) / (2 * N), (N - 1) / (2 * N), 0.5, 1.5)


@dataclass
class TwoLevelSetting:
    coarse: object
    fine: object
    J: np.ndarray                     # 0-based cluster positions
    lam_c: np.ndarray                 # coarse cluster eigenvalues
    U_c: np.ndarray                   # coarse cluster vectors (dim_c, N)
    lam_f: np.ndarray
    U_f: np.ndarray
    P: object                         # prolongation coarse -> fine
    A_c: object
    B_c: object
    A_f: object
    B_f: object
    coarse_spectrum: np.ndarray = None
    nested_residual: float = 0.0
    _factor: object = field(default=None, repr=False)

    @property
    def N(self):
        return self.J.size

    @property
    def factor(self):
        if self._factor is None:
            self._factor = Factorization(self.A_c)
        return self._factor


def _nested_error(P, A_f, A_c):
    D = (P.T @ A_f @ P - A_c).tocsr()
    scale = abs(A_c).max()
    return float(abs(D).max() / scale) if D.nnz else 0.0


def two_level_from_spaces(coarse, fine, J, tol=DEFAULT_TOL, buffer=None, seed=None):
    """Solve both eigenproblems and assemble the operators of the check."""
    J = np.atleast_1d(np.asarray(J, dtype=np.int64))
    k = int(J.max()) + 2
    kwargs = {} if seed is None else {"seed": seed}
    A_c, B_c = assemble_stiffness(coarse), assemble_mass(coarse)
    A_f, B_f = assemble_stiffness(fine), assemble_mass(fine)
    P = prolongation(coarse, fine)
    ec = smallest_eigenpairs(A_c, B_c, min(k, coarse.dim), tol, buffer=buffer, **kwargs)
    if fine is coarse:
        ef = ec
    else:
        ef = smallest_eigenpairs(A_f, B_f, min(k, fine.dim), tol, buffer=buffer,
                                 x0=P @ ec.vectors, **kwargs)
    nested = max(_nested_error(P, A_f, A_c), _nested_error(P, B_f, B_c))
    return TwoLevelSetting(coarse, fine, J, ec.values[J], ec.vectors[:, J],
                           ef.values[J], ef.vectors[:, J], P, A_c, B_c, A_f, B_f,
                           coarse_spectrum=ec.values, nested_residual=nested)


def build_two_level(mesh, r, J, k_rounds=2, tol=DEFAULT_TOL, **kwargs):
    """Coarse space on ``mesh`` and fine space ``k_rounds`` uniform rounds above it."""
    if k_rounds < 0:
        raise ValueError("k_rounds must be nonnegative")
    coarse = build_space(mesh, r)
    fine = coarse if k_rounds == 0 else build_space(uniform_refine(mesh, k_rounds), r)
    return two_level_from_spaces(coarse, fine, J, tol, **kwargs)


# -- projections -------------------------------------------------------------

def ritz_project(s, j=None):
    """Coarse coefficients of ``G ut_j`` (all cluster members if ``j`` is None)."""
    rhs = s.P.T @ (s.A_f @ s.U_f)
    G = s.factor.solve(rhs)
    return G if j is None else G[:, j]


def cluster_l2_project(s, v):
    """``P_c v`` for coarse coefficient vector(s) ``v``."""
    c = s.U_c.T @ (s.B_c @ v)
    return s.U_c @ c


def lambda_project(s, j=None):
    """Coarse coefficients of ``Lam ut_j``."""
    L = cluster_l2_project(s, ritz_project(s))
    return L if j is None else L[:, j]


def l2_project_fine(s):
    """Coarse coefficients of ``P_c ut_j`` for all j (fine-to-coarse-cluster)."""
    c = (s.P @ s.U_c).T @ (s.B_f @ s.U_f)        # c[m, j] = (ut_j, u_m)
    return s.U_c @ c


def alignment_matrix(s):
    """``M[j, m] = (Lam ut_j, u_m)``."""
    return (s.B_c @ s.U_c).T.dot(lambda_project(s)).T


def mu_indicators(s):
    """Theoretical indicators built from ``lt_j P_c ut_j + Lap Lam ut_j``."""
    Lam = lambda_project(s)
    Pu = l2_project_fine(s)
    return residual_indicators(s.coarse, Lam, Pu * s.lam_f)


def eta_coarse(s):
    """Computable indicators of the coarse cluster."""
    cl = EigenCluster(s.lam_c, s.U_c, np.zeros(s.N))
    return eta_indicators(s.coarse, cl)


def fineness(s):
    """``max_j ||ut_j - Lam ut_j||`` measured in the fine mass matrix."""
    D = s.U_f - s.P @ lambda_project(s)
    return float(np.sqrt(np.max(np.einsum("ij,ij->j", D, s.B_f @ D))))


# -- algebraic identities ----------------------------------------------------

def identity_eigen_projection(s, M=None):
    """Relative residual of ``lt_j P_c ut_j = sum_m lam_m M[j,m] u_m`` in L2."""
    M = alignment_matrix(s) if M is None else M
    lhs = l2_project_fine(s) * s.lam_f
    rhs = s.U_c @ (M * s.lam_c).T
    D = lhs - rhs
    err = np.sqrt(np.einsum("ij,ij->j", D, s.B_c @ D))
    return float(np.max(err / s.lam_f))


def identity_residual_rows(s, M=None):
    """Max element-wise defect of ``V = M V_c`` and ``W = M W_c``.

    Each defect is an element (or edge) L2 norm divided by the global L2
    norm of the corresponding row of ``V`` (or ``W``).
    """
    M = alignment_matrix(s) if M is None else M
    space = s.coarse
    Lam = _full(space, lambda_project(s))
    Pu = _full(space, l2_project_fine(s) * s.lam_f)
    Uc = _full(space, s.U_c)

    rule, V = volume_fields(space, Lam, Pu)
    _, Vc = volume_fields(space, Uc, Uc * s.lam_c)
    wq = space.mesh.area[:, None, None] * rule.weights[None, :, None]
    dV = V - np.einsum("jm,eqm->eqj", M, Vc)
    vol = np.sqrt(np.sum(wq * dV ** 2, axis=1)) / np.sqrt(np.sum(wq * V ** 2, axis=(0, 1)))

    edges, W = jump_fields(space, Lam)
    _, Wc = jump_fields(space, Uc)
    if edges.size == 0:
        return {"volume": float(np.max(vol)), "jump": 0.0}
    we = space.mesh.edge_lengths[edges, None, None] * edge_rule(space.degree)[1][None, :, None]
    dW = W - np.einsum("jm,eqmb->eqjb", M, Wc)
    jump = np.sqrt(np.sum(we * np.sum(dW ** 2, axis=-1), axis=1)) \
        / np.sqrt(np.sum(we * np.sum(W ** 2, axis=-1), axis=(0, 1)))
    return {"volume": float(np.max(vol)), "jump": float(np.max(jump))}


# -- report ------------------------------------------------------------------

@dataclass
class AlignmentReport:
    N: int
    degree: int
    coarse_dofs: int
    fine_dofs: int
    M: np.ndarray
    B: np.ndarray
    norm_M_sq: float
    norm_Minv_sq: float
    max_eig_B: float
    max_eig_MtM: float
    sigma_max_sq: float
    B_eigs: np.ndarray
    diag_B: np.ndarray
    offdiag_rowsum: np.ndarray
    eps: float
    threshold: float
    ratio_min: float
    ratio_max: float
    identity_311: float
    identity_313_volume: float
    identity_313_jump: float
    nested_residual: float
    reliability_constant: float
    mj_proxy: float
    eta_total: float
    mu_total: float
    singular: bool = False
    checks: dict = field(default_factory=dict)

    @property
    def fine_enough(self):
        return self.eps <= self.threshold

    @property
    def passed(self):
        """True if every asserted bound holds, or if nothing was asserted."""
        return all(self.checks.values())

    def lines(self):
        out = [
            f"N={self.N}",
            f"degree={self.degree}",
            f"coarse_dofs={self.coarse_dofs}",
            f"fine_dofs={self.fine_dofs}",
            f"surrogate_fineness_eps={self.eps:.12e}",
            f"fineness_threshold={self.threshold:.12e}",
            f"fineness_met={int(self.fine_enough)}",
            f"norm_M_sq={self.norm_M_sq:.15e}",
            f"norm_Minv_sq={self.norm_Minv_sq:.15e}",
            f"max_eig_B={self.max_eig_B:.15e}",
            f"max_eig_MtM={self.max_eig_MtM:.15e}",
            f"sigma_max_M_sq={self.sigma_max_sq:.15e}",
            f"min_eig_B={np.min(self.B_eigs):.15e}",
            f"min_diag_B={np.min(self.diag_B):.15e}",
            f"max_diag_B={np.max(self.diag_B):.15e}",
            f"max_offdiag_rowsum_B={np.max(self.offdiag_rowsum):.15e}",
            f"ratio_mu_eta_min={self.ratio_min:.15e}",
            f"ratio_mu_eta_max={self.ratio_max:.15e}",
            f"identity_eigen_projection_residual={self.identity_311:.6e}",
            f"identity_volume_residual={self.identity_313_volume:.6e}",
            f"identity_jump_residual={self.identity_313_jump:.6e}",
            f"nestedness_residual={self.nested_residual:.6e}",
            f"eta_total_sq={self.eta_total:.15e}",
            f"mu_total_sq={self.mu_total:.15e}",
            f"reliability_constant_observed={self.reliability_constant:.6e}",
            f"separation_proxy_informational={self.mj_proxy:.6e}",
            f"singular_M={int(self.singular)}",
        ]
        if not self.fine_enough:
            out.append("status=fineness condition not met")
        else:
            for name, ok in self.checks.items():
                out.append(f"check_{name}={'pass' if ok else 'FAIL'}")
            out.append("status=" + ("all bounds hold" if self.passed else "BOUND VIOLATED"))
        return out

    def text(self):
        return "\n".join(self.lines()) + "\n"


def verify_lemma(s):
    """Compute the alignment data and check every bound when ``eps`` is small."""
    N = s.N
    M = alignment_matrix(s)
    B = M @ M.T
    B = 0.5 * (B + B.T)
    B_eigs = la.eigvalsh(B)
    MtM = M.T @ M
    max_eig_MtM = float(la.eigvalsh(0.5 * (MtM + MtM.T))[-1])
    sv = la.svdvals(M)
    singular = bool(sv[-1] <= 1e-14 * max(sv[0], 1.0))
    norm_M_sq = float(sv[0] ** 2)
    norm_Minv_sq = float(np.inf if singular else 1.0 / sv[-1] ** 2)
    diag = np.diag(B).copy()
    off = np.sum(np.abs(B), axis=1) - np.abs(diag)

    eta = eta_coarse(s)
    mu = mu_indicators(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mu.values / eta.values
    ratio = ratio[np.isfinite(ratio)]
    ids = identity_residual_rows(s, M)

    # energy error of the projected fine eigenfunctions against the estimator
    D = s.U_f - s.P @ lambda_project(s)
    energy = float(np.sum(np.einsum("ij,ij->j", D, s.A_f @ D)))
    rel = energy / eta.total if eta.total > 0 else np.inf

    spec = s.coarse_spectrum
    others = np.setdiff1d(np.arange(spec.size), s.J)
    mj = float(max(np.max(s.lam_f[None, :] / np.abs(spec[others, None] - s.lam_f[None, :])),
                   0.0)) if others.size else np.nan

    eps = fineness(s)
    thr = fineness_threshold(N)
    rep = AlignmentReport(
        N=N, degree=s.coarse.degree, coarse_dofs=s.coarse.dim, fine_dofs=s.fine.dim,
        M=M, B=B, norm_M_sq=norm_M_sq, norm_Minv_sq=norm_Minv_sq,
        max_eig_B=float(B_eigs[-1]), max_eig_MtM=max_eig_MtM, sigma_max_sq=norm_M_sq,
        B_eigs=B_eigs, diag_B=diag, offdiag_rowsum=off, eps=eps, threshold=thr,
        ratio_min=float(ratio.min()), ratio_max=float(ratio.max()),
        identity_311=identity_eigen_projection(s, M),
        identity_313_volume=ids["volume"], identity_313_jump=ids["jump"],
        nested_residual=s.nested_residual, reliability_constant=rel, mj_proxy=mj,
        eta_total=eta.total, mu_total=mu.total, singular=singular)
    if rep.fine_enough:
        dlo, dhi, omax, slo, shi = gershgorin_bounds(N)
        rep.checks = {
            "norm_M_sq_le_3/2": norm_M_sq <= 1.5 + SLACK,
            "norm_Minv_sq_le_2": norm_Minv_sq <= 2.0 + SLACK,
            "diag_B_in_range": bool(np.all(diag >= dlo - SLACK) and np.all(diag <= dhi + SLACK)),
            "offdiag_rowsum_B": bool(np.all(off <= omax + SLACK)),
            "eig_B_in_[1/2,3/2]": bool(B_eigs[0] >= slo - SLACK and B_eigs[-1] <= shi + SLACK),
            "ratio_mu_eta_in_[1/2,3/2]": bool(rep.ratio_min >= 0.5 * (1 - RATIO_SLACK)
                                              and rep.ratio_max <= 1.5 * (1 + RATIO_SLACK)),
        }
    return rep


def certify(domain, r, n, N, fine_rounds=2, coarse_refines=None, subdivisions=4,
            max_coarse_refines=4, tol=DEFAULT_TOL):
    """Build and verify a two-level setting.

    With ``coarse_refines=None`` the coarse mesh is refined uniformly until
    the surrogate fineness drops below the threshold (at most
    ``max_coarse_refines`` rounds).  Returns ``(report, setting)``.
    """
    J = np.arange(n, n + N)
    mesh = build_initial(domain, subdivisions)
    levels = [coarse_refines] if coarse_refines is not None else range(max_coarse_refines + 1)
    rep = s = None
    for lv in levels:
        m = uniform_refine(mesh, lv) if lv else mesh
        s = build_two_level(m, r, J, fine_rounds, tol)
        rep = verify_lemma(s)
        if rep.fine_enough:
            break
    return rep, s
