"""The linearized problem and its boundary flux map.

The linearized stiffness at a base solution is the forward Newton
Jacobian; solving it against boundary data gives the derivative of the
nonlinear measurement map, which the difference quotients of the
forward solver confirm at first order in the step.
"""

import numpy as np

from qcond.conductivity import preset_p_gauss
from qcond.forward import assemble_jacobian, solve_dirichlet
from qcond.geometry import build_disk_mesh
from qcond.linearized import (LinearizedOperator, fd_derivative_check, linearized_dn,
                              solve_linearized)

cond = preset_p_gauss(0.25)
mesh = build_disk_mesh(1.0, 0.05)
theta = np.arctan2(mesh.vertices[mesh.boundary_loop, 1],
                   mesh.vertices[mesh.boundary_loop, 0])
f = 0.5 * np.cos(2 * theta)
h = np.cos(theta)

print("difference quotient (u[f+th] - u[f])/t against the linearized solve:")
print(f"{'t':>8} {'max error':>12} {'ratio':>8}")
rows = fd_derivative_check(cond, mesh, f, h, (1e-1, 1e-2, 1e-3))
prev = None
for t, err in rows:
    ratio = "" if prev is None else f"{prev / err:8.1f}"
    print(f"{t:8.0e} {err:12.3e} {ratio:>8}")
    prev = err

base = solve_dirichlet(cond, mesh, f)
op = LinearizedOperator.at_base(cond, base)
gap = op.J - assemble_jacobian(cond, mesh, base.u)
print(f"\nlinearized stiffness vs Newton Jacobian: "
      f"max entry gap {np.abs(gap.data).max() if gap.nnz else 0.0:.1e}")
print(f"interior-block condition estimate: {op.condition_estimate():.2e}")

lin = solve_linearized(cond, base, h, operator=op)
flux = linearized_dn(cond, lin)
print(f"linearized flux: total {flux.coeffs.sum():.2e} (divergence form)")
