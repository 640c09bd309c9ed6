"""Newest vertex bisection on the slit domain.

Repeatedly marks the elements touching a slit tip.  The conforming closure
spreads refinement just enough to avoid hanging nodes, every triangle stays
similar to one of the initial shapes, and the two faces of each slit keep
separate vertex copies.
"""
import numpy as np

from clusterafem.fe_space import build_space
from clusterafem.mesh import build_initial, refine, write_mesh

mesh = build_initial("slit", 4)
print(mesh, "min angle %.1f deg" % np.degrees(mesh.min_angle()))
tip = np.array([0.5, 0.0])
for step in range(10):
    near = np.flatnonzero(np.any(np.linalg.norm(mesh.p[mesh.t] - tip, axis=-1) < 1e-12, axis=1))
    mesh = refine(mesh, near)
mesh.check_conforming()
print(mesh, "min angle %.1f deg" % np.degrees(mesh.min_angle()),
      "smallest h %.2e" % mesh.h.min())
for r in (1, 2, 3):
    print(f"P{r} space: {build_space(mesh, r).dim} free dofs")
write_mesh(mesh, "slit_tip_mesh.txt")
print("mesh written to slit_tip_mesh.txt")
