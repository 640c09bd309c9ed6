"""Two-level check of the equivalence of the computable indicator eta and the
theoretical indicator mu.

A two-round uniform refinement of the coarse mesh plays the role of the exact
solution space.  The coarse mesh is refined until the surrogate fineness eps
is below sqrt(1 + 1/(2N)) - 1; then the alignment matrix M of the two
clusters is close to orthogonal and mu^2 / eta^2 stays in [1/2, 3/2].
"""
import numpy as np

from clusterafem.equivalence import certify, fineness_threshold

for domain, r, N in [("slit", 1, 4), ("slit", 3, 4), ("unit_square", 2, 1)]:
    rep, s = certify(domain, r, 0, N)
    print(f"{domain} P{r} N={N}: coarse dofs {s.coarse.dim}, fine dofs {s.fine.dim}")
    print(f"  eps = {rep.eps:.4f} (threshold {fineness_threshold(N):.4f})")
    print(f"  singular values of M: {np.array2string(np.linalg.svd(rep.M)[1], precision=4)}")
    print(f"  mu^2/eta^2 in [{rep.ratio_min:.3f}, {rep.ratio_max:.3f}]  -> "
          f"{rep.lines()[-1]}")

# a coarse mesh that is too coarse: nothing is asserted
rep, _ = certify("slit", 1, 0, 4, coarse_refines=0)
print("unrefined slit mesh:", rep.lines()[-1])
