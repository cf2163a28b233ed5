"""Separation-of-variables flux symbol on a constant-coefficient half-space.

Independent oracle for the probe-based symbol measurement.  On the
normalized half-space {y2 > 0} with constant coefficient matrix
M = S + A (S symmetric positive definite, A antisymmetric), the
divergence-form equation reduces to S_ij v_ij = 0 (the antisymmetric
part drops out of the PDE but not the flux).  Boundary data e^{i xi y1}
extends to the decaying solution e^{i xi y1 - lam y2} with lam the root
of the characteristic quadratic

    S22 lam^2 - 2 i xi S12 lam - S11 xi^2 = 0

with positive real part, and the outward flux (normal (0,-1)) carries
the first-order symbol sqrt(det S) |xi| + i A12 xi.
"""

from __future__ import annotations

import numpy as np


def decaying_root(S: np.ndarray, xi: float) -> complex:
    """Root of the characteristic quadratic with positive real part."""
    S = np.asarray(S, dtype=float)
    roots = np.roots([S[1, 1], -2j * xi * S[0, 1], -S[0, 0] * xi * xi])
    good = roots[roots.real > 0]
    if len(good) != 1:
        raise ValueError("no unique decaying root; coefficient matrix not elliptic?")
    return complex(good[0])


def halfspace_flux_symbol(S: np.ndarray, xi: float, antisym_12: float = 0.0) -> complex:
    """Flux response of the half-space solution to data e^{i xi y1}.

    Computed through the decaying root (never through the closed-form
    determinant), so it stays an independent check of the identity
    symbol = sqrt(det S)|xi| + i A12 xi.
    """
    S = np.asarray(S, dtype=float)
    if xi == 0.0:
        return 0.0 + 0.0j
    lam = decaying_root(S, xi)
    # flux = (S + A)_{ij} nu_i v_j / v  with nu = (0,-1), v_1 = i xi, v_2 = -lam
    sym_part = S[1, 1] * lam - 1j * xi * S[0, 1]
    anti_part = 1j * antisym_12 * xi
    return complex(sym_part + anti_part)
