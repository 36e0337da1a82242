import math

import numpy as np
import pytest

from disloc.cgo import ElasticCgo, ElasticCgoParams
from disloc.corner_probe import (CornerNeighborhood, ProbeError, admissible_directions, betti_pairing, cgo_for,
                                 interface_corner_probe, interface_traction_mismatch, polygon_contour,
                                 probe_identity, recover_displacement_jump, recover_traction_rotation,
                                 relation_matrix, sweep_and_extrapolate)
from disloc.geometry import LameParameters, rotation, theta_matrix

LAME = LameParameters(1.0, 1.0)
XC = np.array([0.5, 0.5])
TAUS = (20.0, 40.0, 80.0, 160.0)


def field(tau, theta0, omega=0.5, lame=LAME, xc=XC):
    return ElasticCgo(ElasticCgoParams.for_direction(tau, theta0, xc, omega, lame))


def corner(theta, f1, f2, g1=(0, 0), g2=(0, 0), theta_min=0.0, h=0.5):
    return CornerNeighborhood.constant(XC, theta_min, theta, h, LAME, f1, f2, g1, g2)


class Linear:
    def __init__(self, G):
        self.G = np.asarray(G, float)

    def value(self, x):
        return np.asarray(x, float) @ self.G.T

    def gradient(self, x):
        return np.broadcast_to(self.G, np.shape(x)[:-1] + (2, 2))


# ---------------------------------------------------------------------------
# Betti pairing

def test_betti_self_pairing_vanishes():
    a = field(1.2, 0.3)
    val, _ = betti_pairing(a, a, polygon_contour([[0, 0], [1, 0], [1, 1], [0, 1]]))
    assert val == 0


def test_betti_two_solutions_closed_contour():
    a, b = field(1.2, 0.3), field(1.1, 2.0)
    val, err = betti_pairing(a, b, polygon_contour([[0, 0], [1, 0], [1, 1], [0, 1]]))
    scale = 4 * np.abs(a.traction(XC, [1, 0])).max() * np.abs(b.value(XC)).max()
    assert abs(val) < 1e-8 * scale


# ---------------------------------------------------------------------------
# probe identity

@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 2, 2 * math.pi / 3])
@pytest.mark.parametrize("tau", [20.0, 40.0])
def test_identity_closure(theta, tau):
    nb = CornerNeighborhood.from_fields(field(1.2, 0.3), field(1.1, 2.0), XC, 0.2, theta, 0.3, LAME, 0.5)
    r = probe_identity(nb, cgo_for(nb, tau))
    assert abs(r["residual"]) <= 10 * r["quadrature_tolerance"]
    assert abs(r["lhs"] - r["lhs_quadrature"]) <= 10 * r["quadrature_tolerance"]


def test_identity_zero_jumps():
    nb = corner(math.pi / 2, (0, 0), (0, 0))
    r = probe_identity(nb, cgo_for(nb, 40.0))
    assert r["lhs"] == 0
    assert all(t == 0 for k, t in r["terms"].items() if k != "R9")


def test_separation_violation():
    nb = corner(math.pi / 2, (1, 0), (0, 0))
    with pytest.raises(ProbeError):
        cgo_for(nb, 20.0, theta0_local=math.pi / 4)


# ---------------------------------------------------------------------------
# displacement jump

def test_unequal_constants_recovered():
    rep = recover_displacement_jump(corner(math.pi / 2, (1, 0), (0, 0)), TAUS)
    np.testing.assert_allclose(rep.delta_f, [1, 0], atol=1e-3)
    assert not rep.inconclusive


def test_equal_corner_values_different_extensions():
    nb = CornerNeighborhood(XC, 0.0, math.pi / 2, 0.5, LAME,
                            lambda r: np.array([1.0, 2.0]) + np.multiply.outer(np.asarray(r) ** 2, [0.7, -0.3]),
                            lambda r: np.array([1.0, 2.0]) + np.multiply.outer(np.sin(3 * np.asarray(r)), [0.2, 0.5]),
                            lambda r: np.zeros(np.shape(r) + (2,)), lambda r: np.zeros(np.shape(r) + (2,)),
                            np.zeros(2), np.array([0.6, 1.5]))
    rep = recover_displacement_jump(nb, TAUS)
    assert np.abs(rep.delta_f).max() < 1e-3


def test_direction_and_radius_invariance():
    f1, f2 = np.array([0.4, -1.1]), np.array([-0.3, 0.2])
    th = 2 * math.pi / 3
    base = recover_displacement_jump(corner(th, f1, f2), TAUS).delta_f
    for d in admissible_directions(th, 3):
        alt = recover_displacement_jump(corner(th, f1, f2), TAUS, theta0s=[d]).delta_f
        np.testing.assert_allclose(alt, base, atol=1e-3)
    halved = recover_displacement_jump(corner(th, f1, f2, h=0.25), TAUS).delta_f
    np.testing.assert_allclose(halved, base, atol=1e-3)


def test_detection_soundness_grid():
    rng = np.random.default_rng(3)
    thetas = [math.pi / 3, math.pi / 2, 2 * math.pi / 3]
    for k in range(20):
        f1, f2 = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        th = thetas[k % 3]
        rep = recover_displacement_jump(corner(th, f1, f2, theta_min=rng.uniform(-1, 1)), TAUS)
        assert abs(np.linalg.norm(rep.delta_f) - np.linalg.norm(f1 - f2)) < 5e-3


# ---------------------------------------------------------------------------
# traction relation

@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 2, 2 * math.pi / 3])
def test_identifiable_relation(theta):
    g2 = np.array([1.0, 1.0])
    rep = recover_traction_rotation(corner(theta, (1, 2), (1, 2), relation_matrix(theta) @ g2, g2), TAUS)
    assert rep.rotation_residual < 1e-3


@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 2, 2 * math.pi / 3])
def test_gap_violation_detected(theta):
    g2 = np.array([1.0, 1.0])
    g1 = relation_matrix(theta) @ g2 + np.array([0.5, 0.0])
    assert recover_traction_rotation(corner(theta, (1, 2), (1, 2), g1, g2), TAUS).rotation_residual > 0.1


def test_zero_tractions():
    assert recover_traction_rotation(corner(math.pi / 2, (0, 0), (0, 0)), TAUS).rotation_residual < 1e-6
    # equal nonzero f leaves only exponentially small edge tails in the sweep
    assert recover_traction_rotation(corner(math.pi / 2, (1, 2), (1, 2)), TAUS).rotation_residual < 1e-4


def test_reflection_relation_is_not_what_the_identity_forces():
    # g1 = Theta g2 with Theta(pi/2)(1, 1) = (-1, -1): the identity sees g1 - M g2 = (-2, 0)
    g2 = np.array([1.0, 1.0])
    g1 = theta_matrix(math.pi / 2) @ g2
    np.testing.assert_allclose(g1, [-1, -1], atol=1e-15)
    rep = recover_traction_rotation(corner(math.pi / 2, (0, 0), (0, 0), g1, g2), TAUS)
    assert rep.rotation_residual == pytest.approx(np.linalg.norm(g1 - relation_matrix(math.pi / 2) @ g2), abs=1e-3)


def test_rotation_refuses_nonzero_jump():
    with pytest.raises(ProbeError):
        recover_traction_rotation(corner(math.pi / 2, (1, 0), (0, 0)), TAUS)


def test_rotation_refuses_gradient():
    nb = corner(math.pi / 2, (0, 0), (0, 0))
    nb.df_plus0 = np.array([0.1, 0.0])
    with pytest.raises(ProbeError):
        recover_traction_rotation(nb, TAUS)


def test_relation_matrix_is_frame_free():
    # g1 = M g2 holds in any frame since M commutes with rotations
    th, phi = 1.1, 0.7
    R = rotation(phi)
    np.testing.assert_allclose(R @ relation_matrix(th) @ R.T, relation_matrix(th), atol=1e-15)


# ---------------------------------------------------------------------------
# interface probe

def test_interface_identical_parameters():
    u = Linear([[1.0, 0.3], [-0.2, 0.0]])
    rep = interface_corner_probe(u, LAME, LAME, corner(math.pi / 2, (0, 0), (0, 0)))
    assert abs(rep.limits["t_hat"]) < 1e-6


def test_interface_rigid_motion():
    u = Linear([[0.0, -0.4], [0.4, 0.0]])
    l2 = LameParameters(3.0, 0.5)
    rep = interface_corner_probe(u, LAME, l2, corner(math.pi / 2, (0, 0), (0, 0)))
    assert abs(rep.limits["t_hat"]) < 1e-12


@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 2, 2 * math.pi / 3])
def test_interface_linear_unit_divergence(theta):
    G = np.array([[0.7, 0.2], [0.5, 0.3]])
    u = Linear(G)
    l1, l2 = LameParameters(1.0, 1.0), LameParameters(2.5, 0.4)
    nb = corner(theta, (0, 0), (0, 0), theta_min=0.3)
    rep = interface_corner_probe(u, l1, l2, nb)
    assert abs(rep.limits["t_hat"] - rep.limits["reference"]) < 1e-3
    # the reference is built from (lam2 - lam1) div u nu + 2 (mu2 - mu1) sym(G) nu on each edge
    nu = nb.normal("minus")
    direct = (l2.lam - l1.lam) * nu + 2 * (l2.mu - l1.mu) * 0.5 * (G + G.T) @ nu
    np.testing.assert_allclose(interface_traction_mismatch(u, l1, l2, XC, nu), direct, atol=1e-15)


# ---------------------------------------------------------------------------
# extrapolation

def test_extrapolation_exact_model():
    p = [10.0, 20.0, 40.0, 80.0]
    ex = sweep_and_extrapolate([(x, 2.5 - 3.0 / x) for x in p])
    assert abs(ex.limit - 2.5) < 1e-12
    assert ex.fitted_rate == pytest.approx(1.0, abs=1e-9)


def test_extrapolation_second_order_term():
    # one level on the last pair removes b/p and leaves exactly -c / (p[-2] p[-1])
    p = [10.0, 20.0, 40.0, 80.0]
    c = 4.0
    ex = sweep_and_extrapolate([(x, 1.0 + 2.0 / x + c / x ** 2) for x in p], max_level=1)
    assert ex.limit - 1.0 == pytest.approx(-c / (p[-2] * p[-1]), rel=1e-10)
    assert abs(ex.limit - 1.0) < c / p[-2] ** 2


def test_extrapolation_error_estimate_calibrated():
    rng = np.random.default_rng(11)
    p = np.array([20.0, 40.0, 80.0, 160.0])
    hits = 0
    for _ in range(100):
        vals = 1.0 + 0.5 / p - 2.0 / p ** 2 + 1e-8 * rng.standard_normal(len(p))
        ex = sweep_and_extrapolate(list(zip(p, vals)))
        hits += ex.error_estimate > abs(ex.limit - 1.0)
    assert hits >= 95


def test_extrapolation_inconclusive_when_not_monotone():
    p = [10.0, 20.0, 40.0, 80.0]
    v = [1.0, 1.1, 1.05, 1.3]
    assert sweep_and_extrapolate(list(zip(p, v))).inconclusive


@pytest.mark.parametrize("p", [[10.0, 20.0, 30.0, 40.0], [10.0, 20.0, 20.0, 40.0]])
def test_extrapolation_needs_geometric_increasing(p):
    with pytest.raises(ValueError):
        sweep_and_extrapolate([(x, 1.0 / x) for x in p])


def test_extrapolation_order_of_input_irrelevant():
    p = [80.0, 10.0, 40.0, 20.0]
    ex = sweep_and_extrapolate([(x, 2.0 + 1.0 / x) for x in p])
    assert abs(ex.limit - 2.0) < 1e-12
