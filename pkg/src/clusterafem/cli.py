"""Command-line front end.

``clusterafem experiment``   adaptive runs, one CSV per (theta, degree, cluster)
``clusterafem equivalence``  two-level estimator-equivalence report

Running ``clusterafem`` without a subcommand performs the experiment with
default flags (unit square, P1, first eigenvalue).
"""
import argparse
import contextlib
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .adapt import AfemConfig, AfemError, run_afem
from .eigensolver import DEFAULT_SEED, DEFAULT_TOL
from .equivalence import certify

THREADS_ENV = "CLUSTERAFEM_THREADS"

DOMAIN_ALIASES = {"square": "unit_square", "unit_square": "unit_square",
                  "square2": "square2", "slit": "slit", "lshape": "lshape"}

log = logging.getLogger("clusterafem")


@dataclass
class RateFit:
    """Least-squares slope of ``log eta`` against ``log dofs``."""

    slope: float
    intercept: float
    q: int
    residual: float


def fit_rate(dofs, eta, q=None):
    """Fit over the last ``q`` points (all points when ``q`` is None)."""
    dofs = np.asarray(dofs, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if q is not None:
        dofs, eta = dofs[-q:], eta[-q:]
    if dofs.size < 3:
        raise ValueError("a rate fit needs at least three points")
    x, y = np.log(dofs), np.log(eta)
    V = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(V, y, rcond=None)
    resid = float(np.linalg.norm(V @ [slope, intercept] - y))
    if not np.isfinite(slope):
        raise ValueError("rate fit produced a non-finite slope")
    return RateFit(float(slope), float(intercept), int(dofs.size), resid)


def _cluster(text):
    try:
        n, N = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cluster must be 'n,N', got {text!r}")
    if n < 0 or N < 1:
        raise argparse.ArgumentTypeError("cluster needs n >= 0 and N >= 1")
    return n, N


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated integer list: {text!r}")


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list: {text!r}")
    if any(not 0.0 < v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("every theta must lie in (0, 1]")
    return vals


def _degree_list(text):
    vals = _int_list(text)
    if any(v not in (1, 2, 3) for v in vals):
        raise argparse.ArgumentTypeError("degrees must be 1, 2 or 3")
    return vals


def _common(p):
    p.add_argument("--domain", choices=sorted(DOMAIN_ALIASES), default="square")
    p.add_argument("--subdivisions", type=int, default=4,
                   help="squares per side of the initial grid (default 4)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="clusterafem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    ex = sub.add_parser("experiment", help="adaptive eigenvalue-cluster runs")
    _common(ex)
    ex.add_argument("--degree", type=_degree_list, default=[1], help="e.g. 1 or 1,2,3")
    ex.add_argument("--cluster", type=_cluster, action="append",
                    help="target cluster 'n,N' (repeatable; default 0,1)")
    ex.add_argument("--theta", type=_float_list, default=[0.5], help="e.g. 0.5,0.8,1")
    ex.add_argument("--max-dofs", type=int, default=2000)
    ex.add_argument("--tol", type=float, default=DEFAULT_TOL)
    ex.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ex.add_argument("--rate-points", type=int, default=4,
                    help="number of final iterations used for the slope fit")

    eq = sub.add_parser("equivalence", help="two-level estimator equivalence report")
    _common(eq)
    eq.add_argument("--degree", type=int, choices=(1, 2, 3), default=1)
    eq.add_argument("--cluster", type=_cluster, default=(0, 1))
    eq.add_argument("--coarse-refines", default="auto",
                    help="uniform rounds for the coarse mesh, or 'auto' to refine until "
                         "the fineness condition holds")
    eq.add_argument("--fine-rounds", type=int, default=2)
    eq.add_argument("--tol", type=float, default=DEFAULT_TOL)
    return parser


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(int(n))


def csv_name(domain, theta, degree, n, N):
    return f"{domain}_r{degree}_n{n}_N{N}_theta{theta:g}.csv"


def write_history_csv(path, hist, rate=None, error=None):
    cfg = hist.config
    k = cfg.n + cfg.N
    header = ["iter", "n_elems", "n_dofs", "eta_total"] + \
        [f"lambda_{i}" for i in range(1, k + 1)] + ["gap_low", "gap_high"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for rec in hist.records:
            row = [str(rec.iteration), str(rec.n_elements), str(rec.n_dofs),
                   f"{rec.eta_total:.17g}"] + [f"{v:.17g}" for v in rec.eigenvalues] + \
                [f"{rec.gap_low:.17g}", f"{rec.gap_high:.17g}"]
            fh.write(",".join(row) + "\n")
        for key, val in asdict(cfg).items():
            fh.write(f"# {key}={val}\n")
        fh.write(f"# status={hist.status}\n")
        if error is not None:
            fh.write(f"# error={error}\n")
        if rate is not None:
            fh.write(f"# slope={rate.slope:.17g} q={rate.q} fit_residual={rate.residual:.3e}\n")


def read_history_csv(path):
    """Return ``(columns, rows, meta)`` of a CSV written by the experiment."""
    meta = {}
    rows = []
    with open(path) as fh:
        cols = fh.readline().strip().split(",")
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    if "=" in item:
                        key, val = item.split("=", 1)
                        meta[key] = val
            elif line.strip():
                rows.append([float(v) for v in line.split(",")])
    return cols, np.array(rows), meta


def run_experiment(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    domain = DOMAIN_ALIASES[args.domain]
    clusters = args.cluster or [(0, 1)]
    status = 0
    for n, N in clusters:
        for r in args.degree:
            for theta in args.theta:
                cfg = AfemConfig(domain=domain, degree=r, n=n, N=N, theta=theta,
                                 max_dofs=args.max_dofs, tol=args.tol,
                                 subdivisions=args.subdivisions, seed=args.seed)
                path = out / csv_name(domain, theta, r, n, N)
                try:
                    hist = run_afem(cfg)
                except AfemError as exc:
                    write_history_csv(path, exc.history, error=str(exc))
                    print(f"error: {exc}", file=sys.stderr)
                    status = 2
                    continue
                rate = None
                if len(hist) >= 3:
                    rate = fit_rate(hist.dofs, hist.eta, min(args.rate_points, len(hist)))
                write_history_csv(path, hist, rate)
                lam = " ".join(f"{v:.6f}" for v in hist.records[-1].eigenvalues[n:])
                slope = "n/a" if rate is None else f"{rate.slope:.3f}"
                print(f"{path}: dofs={hist.records[-1].n_dofs} slope={slope} lambda={lam}")
    return status


def run_equivalence(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    domain = DOMAIN_ALIASES[args.domain]
    n, N = args.cluster
    if args.coarse_refines == "auto":
        coarse = None
    else:
        try:
            coarse = int(args.coarse_refines)
        except ValueError:
            print("error: --coarse-refines must be an integer or 'auto'", file=sys.stderr)
            return 2
    report, _ = certify(domain, args.degree, n, N, fine_rounds=args.fine_rounds,
                        coarse_refines=coarse, subdivisions=args.subdivisions, tol=args.tol)
    path = out / f"equivalence_{domain}_r{args.degree}_n{n}_N{N}.txt"
    text = report.text()
    path.write_text(text)
    sys.stdout.write(text)
    return 0 if report.passed else 1


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("experiment", "equivalence", "-h", "--help"):
        argv = ["experiment"] + argv
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    with _thread_limit():
        try:
            if args.command == "equivalence":
                return run_equivalence(args)
            return run_experiment(args)
        except ValueError as exc:  # invalid configurations surfaced by the library
            print(f"error: {exc}", file=sys.stderr)
            return 2


if __name__ == "__main__":
    sys.exit(main())
