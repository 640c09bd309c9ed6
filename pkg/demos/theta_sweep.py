"""Decay rate of the estimator for several marking parameters and degrees.

For each (r, theta) the slope of log(eta) against log(dofs) over the final
four iterations is printed next to the optimal value -r/2.  The marking
parameter does not need to depend on the size of the cluster.
"""
import warnings

from clusterafem.adapt import AfemConfig, ClusterSeparationWarning, run_afem
from clusterafem.cli import fit_rate

warnings.simplefilter("ignore", ClusterSeparationWarning)

print(" N  r  theta   slope  optimal")
for N in (4, 12):
    for r in (1, 2, 3):
        for theta in (0.5, 0.8):
            hist = run_afem(AfemConfig("slit", r, 0, N, theta, max_dofs=15000))
            fit = fit_rate(hist.dofs, hist.eta, q=4)
            print(f"{N:2d}  {r}  {theta:4.1f}  {fit.slope:+.3f}  {-r / 2:+.1f}")
