"""Structural conditions and the jet radius pi(s).

Every conductivity model declares a coercivity floor lambda0 and a
growth ceiling mu0.  The checker scans a dense (s, p) grid and reports
worst-case margins; the jet radius built from the declared bounds tells
how large a boundary gradient can be prescribed at each state value.
"""

import numpy as np

from qcond.conductivity import (check_structural_conditions, jet_radius, make_preset)

for expr in ("constant(1)", "p_gauss(0.25)", "s_gauss(0.25)",
             "p_lorentz(0.2)", "decay_mix(0.2, 0.05, 0.1)", "sin_slope(2)"):
    cond = make_preset(expr)
    rep = check_structural_conditions(cond, (-2, 2), (0.0, 3.0))
    print(rep.summary())
    verdict = "hard PASS" if rep.passed else "hard FAIL"
    if rep.warnings:
        verdict += f", warnings: {', '.join(rep.warnings)}"
    print(f"  -> {verdict}\n")

print("jet radius profile on the unit disk (diam 2):")
cond = make_preset("p_gauss(0.25)")
print(f"{'s':>6} {'pi(s)':>10} {'B1':>10} {'B2':>10}")
for s in np.linspace(-2, 2, 9):
    jr = jet_radius(cond, s, 2.0)
    print(f"{s:6.2f} {jr.pi:10.4f} {jr.b1:10.4f} {jr.b2:10.4f}")

jr = jet_radius(make_preset("decay_mix(0.2, 0.05, 0.1)"), 0.0, 2.0)
print(f"\ndecay-regime model: pi = {jr.pi} (exponential barriers reach any jet)")
