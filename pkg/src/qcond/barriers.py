"""Explicit sub/supersolutions and boundary-jet prescription.

A barrier is a closed-form function on the normalized domain (tangent
along e1, inner normal along e2, domain in {y2 >= 0}) whose value and
gradient at the origin equal a requested jet (s, p).  With positive
normal slope it is a subsolution, with negative slope a supersolution,
so the comparison principle brackets the normal derivative of the true
solution between the two.  Prescribing a jet then reduces to a monotone
scalar root-find over the barrier's normal-slope parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conductivity import (ConductivitySpec, evaluate_with_derivatives, jet_radius,
                           linearized_conductivity)
from .forward import boundary_jet_of, solve_dirichlet
from .geometry import BoundaryFrame, Mesh, normalize_above_origin


@dataclass(frozen=True)
class Barrier:
    """Closed-form one-sided solution on the normalized domain.

    kind "log":  s + p' y1 - A pn log(1 - y2/A)     (param = A)
    kind "exp":  s + p' y1 + h pn (e^{y2/h} - 1)    (param = h)

    Value s and gradient (p', pn) at the origin are exact.
    """
    kind: str
    s: float
    p_prime: float
    p_n: float
    param: float

    def value(self, y):
        y = np.asarray(y, dtype=float)
        base = self.s + self.p_prime * y[..., 0]
        if self.kind == "log":
            A = self.param
            return base - A * self.p_n * np.log1p(-y[..., 1] / A)
        paramh = self.param
        return base + paramh * self.p_n * np.expm1(y[..., 1] / paramh)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        g = np.empty(y.shape)
        g[..., 0] = self.p_prime
        if self.kind == "log":
            A = self.param
            g[..., 1] = A * self.p_n / (A - y[..., 1])
        else:
            g[..., 1] = self.p_n * np.exp(y[..., 1] / self.param)
        return g

    def hessian22(self, y):
        """Only the (2,2) entry is nonzero for either kind."""
        y = np.asarray(y, dtype=float)
        if self.kind == "log":
            A = self.param
            return A * self.p_n / (A - y[..., 1]) ** 2
        paramh = self.param
        return (self.p_n / paramh) * np.exp(y[..., 1] / paramh)


def log_barrier(s: float, p_normalized, A: float) -> Barrier:
    """Logarithmic barrier with A = 2 diam; valid while y2 < A."""
    p = np.asarray(p_normalized, dtype=float)
    return Barrier("log", float(s), float(p[0]), float(p[1]), float(A))


def exp_barrier(s: float, p_normalized, C_decay: float,
                h: Optional[float] = None, diam: float = 1.0) -> Barrier:
    """Exponential barrier for the decay regime.

    The step h is the largest value obeying |pn|/h >= C |p|, i.e.
    h = |pn|/(C |p|).  A vanishing normal slope admits no such h; a
    caller building the t-family passes h frozen from the bracket
    endpoint instead.
    """
    p = np.asarray(p_normalized, dtype=float)
    if h is None:
        if p[1] == 0.0:
            raise ValueError("exp_barrier: p_n = 0 admits no step h; pass one explicitly")
        denom = float(C_decay) * float(np.linalg.norm(p))
        h = abs(p[1]) / denom if denom > 0 else 2.0 * diam
    return Barrier("exp", float(s), float(p[0]), float(p[1]), float(h))


@dataclass
class MarginReport:
    """Pointwise one-sided margins of a barrier over triangle barycenters."""
    min_margin: float
    argmin: np.ndarray
    margins: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.min_margin >= -1e-10


def verify_one_sided(cond: ConductivitySpec, barrier: Barrier, mesh_normalized: Mesh) -> MarginReport:
    """Evaluate sign(pn) (a_ij d_ij u + a_s |Du|^2) at all barycenters.

    Nonnegative margins certify the sub/supersolution property for this
    conductivity; a negative margin beyond roundoff slack invalidates
    the barrier.
    """
    y = mesh_normalized.centroids
    u = barrier.value(y)
    du = barrier.gradient(y)
    h22 = barrier.hessian22(y)
    aij = linearized_conductivity(cond, u, du)
    _, a_s, _ = evaluate_with_derivatives(cond, u, du)
    expr = aij[:, 1, 1] * h22 + a_s * np.sum(du * du, axis=-1)
    sgn = 1.0 if barrier.p_n >= 0 else -1.0
    margins = sgn * expr
    i = int(np.argmin(margins))
    return MarginReport(float(margins[i]), y[i].copy(), margins)


def in_paraboloid(p_prime: float, p_n: float, b1: float, b2: float) -> bool:
    """Membership in the admissible set  |p'|^2 / B2 <= |pn| <= B1."""
    return p_prime * p_prime / b2 <= abs(p_n) <= b1


def c2_surrogate_norm(mesh: Mesh, f_values: np.ndarray, s: float) -> float:
    """Discrete stand-in for ||f - s||_{C^2}: the largest of the value,
    first and second divided differences along the boundary."""
    g = np.asarray(f_values, dtype=float) - s
    el = mesh.edge_lengths
    d1 = (np.roll(g, -1) - g) / el
    d2 = 2.0 * (np.roll(d1, 0) - np.roll(d1, 1)) / (el + np.roll(el, 1))
    return float(max(np.abs(g).max(), np.abs(d1).max(), np.abs(d2).max()))


@dataclass(frozen=True)
class JetRequest:
    """Target boundary jet at a frame, in original coordinates."""
    frame: BoundaryFrame
    s: float
    p: np.ndarray
    regime: str = "small"      # "small" (log barriers) or "decay" (exp barriers)


@dataclass
class JetResult:
    f: np.ndarray                  # boundary data over boundary_loop
    sol: object                    # DiscreteSolution
    achieved_s: float
    achieved_p: np.ndarray
    t_star: float
    solves: int
    ok: bool
    message: str = ""
    smallness: float = 0.0
    bracket: tuple = (0.0, 0.0)


def prescribe_jet(cond: ConductivitySpec, mesh: Mesh, request: JetRequest, *,
                  pi1: float = 1.0, big_n: float = 10.0,
                  tol_jet: Optional[float] = None, max_solves: int = 40,
                  newton_tol: float = 1e-10,
                  t_hint: Optional[float] = None,
                  u_hint: Optional[np.ndarray] = None) -> JetResult:
    """Construct boundary data whose solution attains the requested jet.

    The data is the trace of a one-parameter barrier family
    f_t = s + p' y1 + t g(y2) with g >= 0, so f_t is pointwise monotone
    in t and the achieved normal slope at the frame is monotone by the
    comparison principle.  The root in t is located by safeguarded
    regula falsi (Illinois) inside the comparison bracket; at the
    bracket endpoints the family member is an exact sub/supersolution.
    """
    frame = request.frame
    p = np.asarray(request.p, dtype=float)
    tol = tol_jet if tol_jet is not None else 1e-3 * (1.0 + np.linalg.norm(p))
    iso = normalize_above_origin(mesh, frame)
    p_t = float(frame.tau @ p)
    p_n = float(-frame.nu @ p)       # inner-normal slope in normalized coords

    jr = jet_radius(cond, request.s, mesh.diameter, pi1=pi1, big_n=big_n)
    if request.regime == "small":
        if np.linalg.norm(p) >= jr.pi:
            raise ValueError(f"jet outside the small-gradient radius: |p|="
                             f"{np.linalg.norm(p):.4g} >= pi(s)={jr.pi:.4g}")
        bracket = jr.b1
    else:
        if cond.decay_constant is None:
            raise ValueError("decay-regime request on a model without a decay constant")
        bracket = max(1.0, 1.5 * abs(p_n))

    yb = iso.apply(mesh.vertices[mesh.boundary_loop])
    f_base = request.s + p_t * yb[:, 0]
    if request.regime == "small":
        A = jr.A
        g_fam = -A * np.log1p(-yb[:, 1] / A)
    else:
        C = float(cond.decay_constant)
        denom = C * math.hypot(p_t, bracket)
        h_fam = bracket / denom if denom > 0 else 2.0 * mesh.diameter
        g_fam = h_fam * np.expm1(yb[:, 1] / h_fam)

    solves = 0
    u_prev = u_hint
    cache = {}

    def achieved(t: float) -> float:
        nonlocal solves, u_prev
        if t in cache:
            return cache[t]
        f_t = f_base + t * g_fam
        sol = solve_dirichlet(cond, mesh, f_t, tol=newton_tol,
                              initial_guess=None if u_prev is None else u_prev.copy())
        solves += 1
        u_prev = sol.u
        s_a, p_a = boundary_jet_of(sol, frame)
        cache[t] = (float(-frame.nu @ p_a), sol, f_t, s_a, p_a)
        return cache[t]

    def err_of(t: float) -> float:
        _, _, _, s_a, p_a = cache[t]
        return abs(s_a - request.s) + float(np.linalg.norm(p_a - p))

    def finish(t):
        pn_a, sol, f_t, s_a, p_a = cache[t]
        err = err_of(t)
        ok = err <= tol
        return JetResult(f=f_t, sol=sol, achieved_s=s_a, achieved_p=p_a,
                         t_star=t, solves=solves, ok=ok,
                         message="" if ok else f"jet error {err:.3e} > tol {tol:.3e}",
                         smallness=c2_surrogate_norm(mesh, f_t, request.s),
                         bracket=(-bracket, bracket))

    t0 = float(np.clip(t_hint if t_hint is not None else p_n, -bracket, bracket))
    phi0 = achieved(t0)[0] - p_n
    if err_of(t0) <= tol:
        return finish(t0)

    # walk downhill (achieved slope is monotone in t) to a sign change
    step = max(abs(phi0), 0.05 * bracket)
    lo = hi = t0
    flo = fhi = phi0
    while flo * fhi > 0 and solves < max_solves:
        if phi0 > 0:      # overshot: root lies at smaller t
            if lo <= -bracket:
                break
            lo = max(-bracket, lo - step)
            flo = achieved(lo)[0] - p_n
            if err_of(lo) <= tol:
                return finish(lo)
        else:
            if hi >= bracket:
                break
            hi = min(bracket, hi + step)
            fhi = achieved(hi)[0] - p_n
            if err_of(hi) <= tol:
                return finish(hi)
        step *= 2.0
    if flo * fhi > 0:
        res = finish(min(cache, key=err_of))
        res.ok = False
        res.message = (f"target normal slope {p_n:.4g} outside achieved interval "
                       f"[{min(flo, fhi) + p_n:.4g}, {max(flo, fhi) + p_n:.4g}]")
        return res

    side = 0
    while solves < max_solves:
        t_new = (lo * fhi - hi * flo) / (fhi - flo)
        t_new = float(np.clip(t_new, lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo)))
        f_new = achieved(t_new)[0] - p_n
        if err_of(t_new) <= tol:
            return finish(t_new)
        if f_new * flo < 0:
            hi, fhi = t_new, f_new
            if side == -1:
                flo *= 0.5
            side = -1
        else:
            lo, flo = t_new, f_new
            if side == 1:
                fhi *= 0.5
            side = 1
    return finish(min(cache, key=err_of))
