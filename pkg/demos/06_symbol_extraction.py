"""High-frequency probing of the linearized flux map.

Windowed oscillations concentrated at a boundary frame pair with the
linearized flux; the response grows linearly in the frequency, with the
real slope measuring sqrt(det a_ij) at the frame and the odd imaginary
slope the antisymmetric flux component.  A constant-coefficient
half-space solved by separation of variables provides the independent
oracle.
"""

import numpy as np

from qcond.geometry import boundary_frame_at, build_disk_mesh
from qcond.halfspace import halfspace_flux_symbol
from qcond.linearized import LinearizedOperator
from qcond.recovery import admissible_taus, extract_symbol

mesh = build_disk_mesh(1.0, 0.025)
frame = boundary_frame_at(mesh, 0.3)
taus = admissible_taus(mesh, (8.0, 16.0, 32.0, 64.0))
print(f"mesh h=0.025: {len(mesh.boundary_loop)} boundary nodes, "
      f"admissible frequencies {taus}")

configs = [
    ("identity", np.eye(2), 0.0),
    ("diag(2, 1/2)", np.diag([2.0, 0.5]), 0.0),
    ("full SPD", np.array([[1.3, 0.4], [0.4, 0.9]]), 0.0),
    ("identity + skew(0.3)", np.eye(2), 0.3),
]
print(f"\n{'configuration':<22} {'measured':>10} {'oracle':>10} {'error':>8} "
      f"{'imag meas':>10} {'imag true':>10}")
for name, S, m in configs:
    A = np.array([[0.0, m], [-m, 0.0]])
    op = LinearizedOperator.from_fields(mesh, S + A)
    sym = extract_symbol(op.dn_flux, mesh, frame, taus)
    oracle = halfspace_flux_symbol(S, 1.0, antisym_12=m)
    imag_true = float(frame.nu @ A @ frame.tau)
    print(f"{name:<22} {sym.real_slope:10.5f} {oracle.real:10.5f} "
          f"{100 * abs(sym.real_slope - oracle.real) / oracle.real:7.2f}% "
          f"{sym.imag_slope:10.5f} {imag_true:10.5f}")

print("\nthe parity split (conjugate probes) separates the even metric part")
print("from the odd antisymmetric part exactly; residual "
      f"{sym.parity_residual:.1e}")
