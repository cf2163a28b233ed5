import numpy as np
import pytest

from qcond.geometric import (alpha_tensor, beta_normal_component, beta_reassemble,
                             geometric_data, magnetic_coefficients, metric_from_linearized,
                             normal_identity_residual, operator_equivalence_residual,
                             recovered_gradient)
from qcond.geometry import build_disk_mesh


def test_metric_identity_cases():
    G, g, sigma = metric_from_linearized(np.eye(2))
    assert sigma == 1.0
    assert np.allclose(G, np.eye(2)) and np.allclose(g, np.eye(2))


def test_metric_diag_example():
    # det a = 4: G normalizes to unit determinant, sigma carries the rest
    G, g, sigma = metric_from_linearized(np.diag([4.0, 1.0]))
    assert sigma ** 2 == pytest.approx(4.0)
    assert np.allclose(G, np.diag([2.0, 0.5]))
    assert np.linalg.det(G) == pytest.approx(1.0)
    assert np.allclose(g, np.diag([0.5, 2.0]))
    assert np.allclose(sigma * G, np.diag([4.0, 1.0]))    # sigma G = a_ij


def test_metric_n3_round_trip():
    a = np.diag([1.0, 1.0, 4.0])
    G, g, sigma = metric_from_linearized(a)
    assert sigma is None
    assert np.allclose(G, np.diag([0.25, 0.25, 1.0]))
    # round trip: (det G)^{-1/2} G recovers a
    assert np.allclose(np.linalg.det(G) ** -0.5 * G, a)


def test_metric_rejects_indefinite():
    with pytest.raises(ValueError):
        metric_from_linearized(np.diag([1.0, -1.0]))


def test_alpha_examples_and_antisymmetry():
    assert np.allclose(alpha_tensor(np.zeros((2, 2)), np.eye(2)), 0.0)
    al = alpha_tensor(np.array([[0.0, 0.7], [-0.7, 0.0]]), np.eye(2))
    assert np.allclose(al, [[0.0, 0.7], [-0.7, 0.0]])
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        B = rng.normal(size=(2, 2))
        g = B @ B.T + 0.3 * np.eye(2)
        m = rng.normal()
        al = alpha_tensor(np.array([[0.0, m], [-m, 0.0]]), g)
        V, W = rng.normal(size=2), rng.normal(size=2)
        worst = max(worst, abs((al @ V) @ g @ W + V @ g @ (al @ W)))
        assert abs((al @ V) @ g @ V) < 1e-12 * (1 + np.sum(V * V))
    assert worst < 1e-12


def test_normal_identity_pointwise():
    # a = I: both sides reduce to the plain normal derivative
    assert normal_identity_residual(np.eye(2), np.zeros((2, 2)),
                                    np.array([0.0, -1.0])) < 1e-15
    rng = np.random.default_rng(8)
    for _ in range(100):
        B = rng.normal(size=(2, 2))
        S = B @ B.T + 0.5 * np.eye(2)
        m = rng.normal()
        th = rng.uniform(0, 2 * np.pi)
        nu = np.array([np.cos(th), np.sin(th)])
        res = normal_identity_residual(S, np.array([[0.0, m], [-m, 0.0]]), nu)
        assert res < 1e-12


def test_tangential_data_only_property():
    # the antisymmetric flux annihilates the normal part of the gradient
    S = np.diag([2.0, 0.7])
    m = 0.4
    A = np.array([[0.0, m], [-m, 0.0]])
    nu = np.array([0.0, -1.0])
    assert abs(nu @ A @ nu) < 1e-15
    tau = np.array([1.0, 0.0])
    assert abs(nu @ A @ tau - m * (nu[0] * tau[1] - nu[1] * tau[0])) < 1e-15


def test_beta_round_trip():
    rng = np.random.default_rng(9)
    for _ in range(20):
        B = rng.normal(size=(2, 2))
        S = B @ B.T + 0.5 * np.eye(2)
        A_lower = rng.normal(size=2)
        val = rng.normal()
        bn = beta_normal_component(val, S, A_lower)
        assert abs(beta_reassemble(bn, S, A_lower) - val) < 1e-8 * (1 + abs(val))


def test_recovered_gradient_linear_exact():
    m = build_disk_mesh(1.0, 0.1)
    x = m.centroids
    f = 0.3 + 2.0 * x[:, 0] - 1.1 * x[:, 1]
    g = recovered_gradient(m, f)
    interior = np.linalg.norm(x, axis=1) < 0.8
    assert np.abs(g[interior] - [2.0, -1.1]).max() < 1e-9


def test_magnetic_coefficients_hand_formula():
    # b = 0, a_ij = c(x) I: sigma = c, G = I, A = grad(c) / (2c), q ~ 0 residual
    m = build_disk_mesh(1.0, 0.1)
    x = m.centroids
    c = 1.0 + 0.3 * x[:, 0] + 0.1 * x[:, 1] ** 2
    aij = c[:, None, None] * np.eye(2)
    G, g, sigma = metric_from_linearized(aij)
    A_lower, q = magnetic_coefficients(m, np.zeros((len(x), 2)), sigma, g, G)
    grad_c = np.stack([0.3 * np.ones(len(x)), 0.2 * x[:, 1]], axis=1)
    interior = np.linalg.norm(x, axis=1) < 0.8
    assert np.abs(A_lower - grad_c / (2 * c[:, None]))[interior].max() < 5e-3
    # trivial fields give trivial coefficients
    A0, q0 = magnetic_coefficients(m, np.zeros((len(x), 2)), np.ones(len(x)),
                                   np.broadcast_to(np.eye(2), (len(x), 2, 2)),
                                   np.broadcast_to(np.eye(2), (len(x), 2, 2)))
    assert np.abs(A0).max() < 1e-11 and np.abs(q0).max() < 1e-11


def _synthetic_fields(m):
    x = m.centroids
    aij = np.empty((len(x), 2, 2))
    aij[:, 0, 0] = 2.0 + 0.3 * x[:, 0]
    aij[:, 1, 1] = 1.5 + 0.2 * x[:, 1]
    aij[:, 0, 1] = aij[:, 1, 0] = 0.1 * x[:, 0] * x[:, 1]
    b = np.stack([0.05 * x[:, 1], -0.04 * x[:, 0]], axis=1)
    v_val = 0.5 * x[:, 0] ** 2 + x[:, 0] * x[:, 1] - x[:, 1] ** 2 / 3
    v_grad = np.stack([x[:, 0] + x[:, 1], x[:, 0] - 2 * x[:, 1] / 3], axis=1)
    v_hess = np.broadcast_to(np.array([[1.0, 1.0], [1.0, -2.0 / 3.0]]), (len(x), 2, 2))
    return aij, b, v_grad, v_hess, v_val


def test_operator_equivalence_refines():
    res = []
    for h in (0.1, 0.05):
        m = build_disk_mesh(1.0, h)
        res.append(operator_equivalence_residual(m, *_synthetic_fields(m)))
    assert res[0] < 1e-2
    assert res[1] < 0.75 * res[0]


def test_det_G_normalized_on_solution_fields():
    from qcond.conductivity import preset_p_gauss, linearized_conductivity
    from qcond.forward import solve_dirichlet
    pg = preset_p_gauss(0.25)
    m = build_disk_mesh(1.0, 0.1)
    th = np.arctan2(m.vertices[m.boundary_loop, 1], m.vertices[m.boundary_loop, 0])
    sol = solve_dirichlet(pg, m, 0.5 * np.cos(2 * th))
    tri = m.triangles
    gradu = np.einsum("ti,tik->tk", sol.u[tri], m.hat_gradients)
    aij = linearized_conductivity(pg, sol.u[tri].mean(axis=1), gradu)
    G, g, sigma = metric_from_linearized(aij)
    assert np.abs(np.linalg.det(G) - 1.0).max() < 1e-10
    assert np.abs(sigma[:, None, None] * G - aij).max() < 1e-12
    data = geometric_data(m, aij, np.zeros_like(gradu))
    assert data.q.shape == (len(tri),)
