"""Barriers and boundary-jet prescription.

A logarithmic barrier with its gradient parameters inside the
admissible paraboloid is a one-sided solution: the comparison principle
then forces the true solution's normal derivative past the barrier's.
Bisecting the barrier's normal-slope parameter lands any requested jet
with |p| < pi(s).
"""

import math

import numpy as np

from qcond.barriers import JetRequest, log_barrier, prescribe_jet, verify_one_sided
from qcond.conductivity import jet_radius, preset_p_gauss, preset_s_gauss
from qcond.geometry import (boundary_frame_at, build_disk_mesh, normalize_above_origin,
                            transform_mesh)

mesh = build_disk_mesh(1.0, 0.05)
cond = preset_p_gauss(0.25)
frame = boundary_frame_at(mesh, -math.pi / 2)
normalized = transform_mesh(mesh, normalize_above_origin(mesh, frame))

jr = jet_radius(cond, 0.3, mesh.diameter, pi1=1e6)
print(f"paraboloid at s=0.3: |p'|^2/{jr.b2:.3f} <= |pn| <= {jr.b1:.3f}")

inside = log_barrier(0.3, (0.5 * math.sqrt(jr.b1 * jr.b2), jr.b1), jr.A)
rep = verify_one_sided(cond, inside, normalized)
print(f"barrier inside the paraboloid:  min margin {rep.min_margin:+.3e}  (one-sided)")

outside = log_barrier(0.7, (10 * math.sqrt(jr.b1 * jr.b2), jr.b1), jr.A)
rep_bad = verify_one_sided(preset_s_gauss(0.25), outside, normalized)
print(f"barrier 10x outside (drift model): min margin {rep_bad.min_margin:+.3e}  (fails)")

print("\njet prescription (target = achieved within 1e-3 (1+|p|)):")
jr = jet_radius(cond, 0.3, mesh.diameter)
print(f"{'direction':>10} {'|p|':>8} {'err':>10} {'solves':>7}")
rng = np.random.default_rng(1)
frame = boundary_frame_at(mesh, 1.0)
for k in range(5):
    d = rng.normal(size=2)
    p = 0.75 * jr.pi * d / np.linalg.norm(d)
    res = prescribe_jet(cond, mesh, JetRequest(frame=frame, s=0.3, p=p, regime="small"))
    err = abs(res.achieved_s - 0.3) + np.linalg.norm(res.achieved_p - p)
    print(f"{np.degrees(math.atan2(d[1], d[0])):10.1f} {np.linalg.norm(p):8.4f} "
          f"{err:10.2e} {res.solves:7d}")
