import math

import numpy as np
import pytest

from qcond.barriers import (JetRequest, c2_surrogate_norm, exp_barrier, in_paraboloid,
                            log_barrier, prescribe_jet, verify_one_sided)
from qcond.conductivity import (jet_radius, preset_constant, preset_decay_mix,
                                preset_p_gauss, preset_s_gauss, preset_sin_slope)
from qcond.forward import boundary_jet_of, solve_dirichlet
from qcond.geometry import boundary_frame_at, build_disk_mesh, normalize_above_origin, transform_mesh


def fd_gradient(fn, y, h=1e-6):
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (fn(y + e) - fn(y - e)) / (2 * h)
    return g


@pytest.mark.parametrize("kind,params", [
    ("log", dict(s=0.3, p=(0.07, 0.04), A=4.0)),
    ("log", dict(s=-0.5, p=(0.1, 0.0), A=4.0)),       # p_n = 0: affine
    ("exp", dict(s=0.2, p=(0.0, 3.0), C=1.0)),
    ("exp", dict(s=0.2, p=(1.0, -2.0), C=0.5)),
])
def test_barrier_jet_exact(kind, params):
    if kind == "log":
        b = log_barrier(params["s"], params["p"], params["A"])
    else:
        b = exp_barrier(params["s"], params["p"], params["C"])
    assert abs(b.value(np.zeros(2)) - params["s"]) < 1e-12
    assert np.linalg.norm(b.gradient(np.zeros(2)) - params["p"]) < 1e-12
    # closed-form derivatives against finite differences of the value
    y = np.array([0.3, 0.8])
    assert np.linalg.norm(b.gradient(y) - fd_gradient(lambda z: b.value(z), y)) < 1e-6
    h22 = (b.gradient(y + [0, 1e-6])[1] - b.gradient(y - [0, 1e-6])[1]) / 2e-6
    assert abs(b.hessian22(y) - h22) < 1e-5


def test_exp_barrier_step_rule():
    b = exp_barrier(0.0, (0.0, 3.0), 1.0)
    assert abs(b.param - 1.0) < 1e-14        # h = |pn|/(C |p|) = 3/3
    with pytest.raises(ValueError):
        exp_barrier(0.0, (1.0, 0.0), 1.0)    # p_n = 0 needs an explicit step


def normalized_mesh(h=0.1):
    m = build_disk_mesh(1.0, h)
    fr = boundary_frame_at(m, -math.pi / 2)
    return transform_mesh(m, normalize_above_origin(m, fr))


def test_laplace_log_barrier_one_sided():
    mn = normalized_mesh()
    rep = verify_one_sided(preset_constant(1.0), log_barrier(0.0, (0.0, 0.1), 4.0), mn)
    assert rep.ok and rep.min_margin >= 0.0
    rep_neg = verify_one_sided(preset_constant(1.0), log_barrier(0.0, (0.0, -0.1), 4.0), mn)
    assert rep_neg.ok


def test_in_paraboloid_margins_nonneg():
    mn = normalized_mesh()
    for cond in (preset_constant(1.0), preset_p_gauss(0.25), preset_decay_mix()):
        jr = jet_radius(cond, 0.3, 2.0, pi1=1e6)   # full paraboloid, no pi1 shrink
        for pp in np.linspace(-math.sqrt(jr.b1 * jr.b2), math.sqrt(jr.b1 * jr.b2), 5):
            for pn in (jr.b1, max(pp * pp / jr.b2, 1e-4), -jr.b1):
                if not in_paraboloid(pp, pn, jr.b1, jr.b2):
                    continue
                rep = verify_one_sided(cond, log_barrier(0.3, (pp, pn), jr.A), mn)
                assert rep.min_margin >= -1e-10, (cond.name, pp, pn, rep.min_margin)


def test_out_of_paraboloid_counterexample():
    # tangential part 10x outside the admissible set: the drift term wins
    mn = normalized_mesh()
    cond = preset_s_gauss(0.25)
    jr = jet_radius(cond, 0.7, 2.0, pi1=1e6)
    pp = 10.0 * math.sqrt(jr.b1 * jr.b2)
    rep = verify_one_sided(cond, log_barrier(0.7, (pp, jr.b1), jr.A), mn)
    assert rep.min_margin < -1e-6


def test_exp_barrier_rule_violation_goes_negative():
    # drift saturating its decay bound: doubling h breaks one-sidedness
    mn = normalized_mesh()
    cond = preset_sin_slope(2.0)
    p = (3.0, 1.0)
    b_ok = exp_barrier(math.pi, p, 2.0)
    b_bad = exp_barrier(math.pi, p, 2.0, h=2.0 * b_ok.param)
    assert verify_one_sided(cond, b_bad, mn).min_margin < -1e-6


def test_prescribe_jet_laplace_affine():
    m = build_disk_mesh(1.0, 0.1)
    fr = boundary_frame_at(m, -math.pi / 2)
    req = JetRequest(frame=fr, s=0.0, p=0.1 * fr.tau, regime="small")
    res = prescribe_jet(preset_constant(1.0), m, req, pi1=1e6)
    assert res.ok and res.solves <= 2
    assert np.linalg.norm(res.achieved_p - req.p) < 5.0 * m.h ** 2


def test_prescribe_jet_constant():
    m = build_disk_mesh(1.0, 0.1)
    fr = boundary_frame_at(m, 1.0)
    req = JetRequest(frame=fr, s=0.8, p=np.zeros(2), regime="small")
    res = prescribe_jet(preset_p_gauss(0.25), m, req)
    assert res.ok
    assert abs(res.achieved_s - 0.8) < 1e-10
    assert np.linalg.norm(res.achieved_p) < 1e-8


def test_prescribe_jet_closed_loop():
    m = build_disk_mesh(1.0, 0.05)
    cond = preset_p_gauss(0.25)
    fr = boundary_frame_at(m, 2.2)
    jr = jet_radius(cond, 0.3, m.diameter)
    rng = np.random.default_rng(5)
    for _ in range(3):
        d = rng.normal(size=2)
        p = 0.7 * jr.pi * d / np.linalg.norm(d)
        res = prescribe_jet(cond, m, JetRequest(frame=fr, s=0.3, p=p, regime="small"))
        assert res.ok, res.message
        tol = 1e-3 * (1 + np.linalg.norm(p))
        assert abs(res.achieved_s - 0.3) + np.linalg.norm(res.achieved_p - p) <= tol
        assert res.smallness <= 1.0       # small-data certificate


def test_jet_outside_radius_rejected():
    m = build_disk_mesh(1.0, 0.1)
    cond = preset_p_gauss(0.25)
    fr = boundary_frame_at(m, 0.0)
    jr = jet_radius(cond, 0.0, m.diameter)
    with pytest.raises(ValueError, match="small-gradient radius"):
        prescribe_jet(cond, m, JetRequest(frame=fr, s=0.0, p=1.1 * jr.pi * fr.tau,
                                          regime="small"))


def test_comparison_ordering_at_bracket_endpoints():
    # data from the barrier at p_n = +-B1 pushes the achieved slope past it
    m = build_disk_mesh(1.0, 0.05)
    cond = preset_p_gauss(0.25)
    fr = boundary_frame_at(m, 0.9)
    iso = normalize_above_origin(m, fr)
    jr = jet_radius(cond, 0.2, m.diameter)
    yb = iso.apply(m.vertices[m.boundary_loop])
    tol = 2e-3
    for sgn in (+1.0, -1.0):
        f = 0.2 - jr.A * (sgn * jr.b1) * np.log1p(-yb[:, 1] / jr.A)
        sol = solve_dirichlet(cond, m, f)
        _, p = boundary_jet_of(sol, fr)
        achieved = -fr.nu @ p
        if sgn > 0:
            assert achieved >= jr.b1 - tol
        else:
            assert achieved <= -jr.b1 + tol


def test_bisection_map_monotone():
    m = build_disk_mesh(1.0, 0.1)
    cond = preset_p_gauss(0.25)
    fr = boundary_frame_at(m, 0.4)
    iso = normalize_above_origin(m, fr)
    jr = jet_radius(cond, 0.0, m.diameter)
    yb = iso.apply(m.vertices[m.boundary_loop])
    achieved = []
    for t in np.linspace(-jr.b1, jr.b1, 7):
        f = 0.02 * yb[:, 0] - jr.A * t * np.log1p(-yb[:, 1] / jr.A)
        _, p = boundary_jet_of(solve_dirichlet(cond, m, f), fr)
        achieved.append(-fr.nu @ p)
    assert all(a < b + 1e-12 for a, b in zip(achieved, achieved[1:]))


def test_decay_jets_large_gradient():
    m = build_disk_mesh(1.0, 0.05)
    cond = preset_decay_mix()
    fr = boundary_frame_at(m, 0.0)
    for d in (fr.tau, -fr.nu, 0.6 * fr.tau - 0.8 * fr.nu):
        p = 5.0 * np.asarray(d) / np.linalg.norm(d)
        res = prescribe_jet(cond, m, JetRequest(frame=fr, s=0.3, p=p, regime="decay"))
        assert res.ok, res.message
        assert (abs(res.achieved_s - 0.3) + np.linalg.norm(res.achieved_p - p)
                <= 1e-3 * (1 + np.linalg.norm(p)))


def test_decay_request_needs_decay_constant():
    m = build_disk_mesh(1.0, 0.2)
    fr = boundary_frame_at(m, 0.0)
    with pytest.raises(ValueError, match="decay constant"):
        prescribe_jet(preset_p_gauss(0.25), m,
                      JetRequest(frame=fr, s=0.0, p=2.0 * fr.tau, regime="decay"))


def test_bracket_failure_reported():
    m = build_disk_mesh(1.0, 0.2)
    cond = preset_p_gauss(0.25)
    fr = boundary_frame_at(m, 0.0)
    jr = jet_radius(cond, 0.0, m.diameter)
    p = 0.9 * jr.pi * fr.tau
    res = prescribe_jet(cond, m, JetRequest(frame=fr, s=0.0, p=p, regime="small"),
                        max_solves=1, t_hint=jr.b1)
    assert not res.ok and res.message


def test_c2_surrogate_norm():
    m = build_disk_mesh(1.0, 0.1)
    f = np.full(len(m.boundary_loop), 0.7)
    assert c2_surrogate_norm(m, f, 0.7) == 0.0
    f2 = f + 0.1 * m.vertices[m.boundary_loop, 0]
    assert 0.05 < c2_surrogate_norm(m, f2, 0.7) < 0.5
