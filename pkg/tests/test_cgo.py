import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma as gamma_fn

from disloc.cgo import (ElasticCgoParams, HarmonicCgoParams, LameZeroCgoParams, Sector, cgo_elastic, cgo_harmonic,
                        cgo_lame_zero, edge_integral_exact, edge_integral_quadrature, gamma_tail,
                        lame_zero_l2_check, power_exp_integral, sector_integral_exact,
                        sector_integral_quadrature, volume_decay_check, weighted_decay_check)
from disloc.geometry import GeometryError, LameParameters

RNG = np.random.default_rng(7)


def elastic(tau=5.0, theta0=0.7, omega=1.3, lame=LameParameters(2.0, 0.8), xc=(0.1, -0.2)):
    return cgo_elastic(ElasticCgoParams.for_direction(tau, theta0, np.array(xc), omega, lame))


def points(n=100):
    return RNG.uniform(-1, 1, (n, 2))


def off_cut(n=100):
    # right half plane stays clear of the branch cut along the negative axis
    return np.column_stack([RNG.uniform(0.05, 1.0, n), RNG.uniform(-1, 1, n)])


# ---------------------------------------------------------------------------
# elastic family

@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(-math.pi, math.pi), st.floats(0.0, 3.0), st.floats(0.2, 5.0),
       st.floats(0.1, 5.0))
def test_elastic_vector_identities(tau, theta0, omega, lam, mu):
    lame = LameParameters(lam, mu)
    p = ElasticCgoParams.for_direction(tau + omega / math.sqrt(mu), theta0, np.zeros(2), omega, lame)
    xi, eta = p.xi, p.eta
    scale = abs(xi @ np.conj(xi))
    assert abs(xi @ eta) <= 1e-12 * scale
    assert abs(xi @ xi + p.kappa_s ** 2) <= 1e-12 * scale
    assert np.linalg.norm(eta) <= math.sqrt(3) + 1e-12
    assert np.linalg.norm(eta) == pytest.approx(math.sqrt(2 + p.kappa_s ** 2 / p.tau ** 2), rel=1e-13)


def test_elastic_pde_residual():
    u = elastic()
    x = points()
    r = np.linalg.norm(u.residual(x), axis=-1)
    ref = np.linalg.norm(u.value(x), axis=-1) * (u.params.lame.lam + 2 * u.params.lame.mu) * u.params.tau ** 2
    assert np.max(r / ref) < 1e-10


def test_elastic_traction_closed_form():
    u = elastic()
    x = points()
    ang = RNG.uniform(0, 2 * math.pi, len(x))
    nu = np.column_stack([np.cos(ang), np.sin(ang)])
    direct = u.traction(x, nu)
    closed = u.closed_form_traction(x, nu)
    assert np.max(np.abs(direct - closed) / np.abs(direct).max()) < 1e-12


def test_tau_must_exceed_kappa():
    with pytest.raises(GeometryError):
        ElasticCgoParams.for_direction(0.5, 0.0, np.zeros(2), 1.0, LameParameters(1.0, 1.0))


@pytest.mark.parametrize("field", [elastic(tau=3.0),
                                   cgo_lame_zero(LameZeroCgoParams(4.0, np.zeros(2), 0.0, LameParameters(1.5, 0.7)))])
def test_gradient_matches_finite_differences(field):
    x = off_cut(20)
    G = field.gradient(x)
    step = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fd = (field.value(x + e) - field.value(x - e)) / (2 * step)
        assert np.max(np.abs(fd - G[..., j])) <= 1e-6 * np.abs(G).max()


def test_elastic_frame_covariance():
    lame = LameParameters(1.0, 1.0)
    phi = 0.4
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    a = cgo_elastic(ElasticCgoParams.for_direction(4.0, 0.3, np.zeros(2), 0.5, lame))
    b = cgo_elastic(ElasticCgoParams.for_direction(4.0, 0.3 + phi, np.zeros(2), 0.5, lame))
    x = points(30)
    np.testing.assert_allclose(b.value(x @ R.T), a.value(x) @ R.T, atol=1e-12)


# ---------------------------------------------------------------------------
# harmonic and zero-frequency Lame families

def test_harmonic_laplacian():
    u = cgo_harmonic(HarmonicCgoParams(16.0, np.zeros(2)))
    x = off_cut()
    H = u.hessian(x)
    scale = np.abs(H).max(axis=(-1, -2))
    assert np.max(np.abs(u.residual(x)) / scale) < 1e-9


def test_lame_zero_residual_and_second_component():
    u = cgo_lame_zero(LameZeroCgoParams(4.0, np.zeros(2), 0.0, LameParameters(3.0, 0.5)))
    x = off_cut()
    v = u.value(x)
    np.testing.assert_allclose(v[:, 1], 1j * v[:, 0], rtol=1e-14)
    scale = np.abs(u.hessian(x)).max(axis=(-1, -2, -3))
    assert np.max(np.linalg.norm(u.residual(x), axis=-1) / scale) < 1e-9


def test_branch_cut_rejected():
    u = cgo_harmonic(HarmonicCgoParams(4.0, np.zeros(2)))
    with pytest.raises(GeometryError):
        u.value(np.array([[-0.5, 0.0]]))


def test_sector_integral_example():
    val = sector_integral_exact("harmonic", 16.0, 0.0, math.pi / 2)
    assert val == pytest.approx(-12j / 256, abs=1e-16)
    q = sector_integral_quadrature("harmonic", 16.0, 0.0, math.pi / 2)
    assert abs(q - val) <= 1e-6 * abs(val)


def test_lame_zero_sector_integral():
    val = sector_integral_exact("lame_zero", 4.0, -0.5, 1.5)
    q = sector_integral_quadrature("lame_zero", 4.0, -0.5, 1.5)
    assert abs(q - val) <= 1e-6 * abs(val)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("s", [4.0, 64.0])
def test_weighted_decay_bound(alpha, s):
    val, bound = weighted_decay_check(alpha, s, -1.0, 1.0)
    assert 0 < val <= bound


def test_lame_zero_l2_bound():
    for s, h in ((4.0, 0.5), (16.0, 0.25), (64.0, 1.0)):
        out = lame_zero_l2_check(s, h, 0.0, math.pi / 2)
        assert out["holds"] and 0 < out["T"] <= h
        assert out["norm"] <= math.sqrt(math.pi / 2) * math.exp(-s * math.sqrt(out["T"]) * h) * (1 + 1e-12)


# ---------------------------------------------------------------------------
# exact integrals

def test_edge_integral_theta_zero():
    s, h = 16.0, 0.25
    e = math.exp(-s * math.sqrt(h))
    assert edge_integral_exact(s, h, 0.0) == pytest.approx(2 / s ** 2 * (1 - e - s * math.sqrt(h) * e), rel=1e-14)


@pytest.mark.parametrize("s", [4.0, 16.0, 64.0])
@pytest.mark.parametrize("h", [0.25, 1.0])
@pytest.mark.parametrize("theta", [0.0, math.pi / 4, math.pi / 2])
def test_edge_integral_against_quadrature(s, h, theta):
    ex = edge_integral_exact(s, h, theta)
    assert abs(ex - edge_integral_quadrature(s, h, theta)) <= 1e-8 * abs(ex)


@pytest.mark.parametrize("theta", [0.0, 1.0, 2.5])
def test_edge_integral_large_s(theta):
    s = 400.0
    assert s ** 2 * edge_integral_exact(s, 1.0, theta) == pytest.approx(2 * np.exp(-1j * theta), rel=1e-12)


@pytest.mark.parametrize("zeta", [20.0, 40.0])
def test_gamma_tail_alpha_zero(zeta):
    out = gamma_tail(0.0, 1.0, zeta)
    exact = (1 - math.exp(-zeta)) / zeta
    assert out["leading"] == pytest.approx(1 / zeta)
    assert abs(exact - out["leading"]) == pytest.approx(math.exp(-zeta) / zeta, rel=1e-9)
    assert abs(exact - out["leading"]) <= out["tail_bound"]


def test_gamma_tail_alpha_one():
    out = gamma_tail(1.0, 1.0, 10.0)
    assert out["leading"] == pytest.approx(0.01, rel=1e-14)
    assert abs(power_exp_integral(1.0, 10.0, 0.0, 1.0) - out["leading"]) <= out["tail_bound"]


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("zeta", [10 + 3j, 10 - 8j, 40 + 25j])
def test_gamma_tail_inequality(alpha, zeta):
    h = 1.0
    tail = power_exp_integral(alpha, zeta, h, np.inf)
    assert abs(tail) <= gamma_tail(alpha, h, zeta)["tail_bound"]
    full = power_exp_integral(alpha, zeta, 0.0, h)
    lead = gamma_fn(alpha + 1) / zeta ** (alpha + 1)
    assert abs(full + tail - lead) <= 1e-10 * abs(lead)


@pytest.mark.parametrize("args", [(1.0, 3.0, 10.0), (1.0, 1.0, -1 + 1j), (-0.5, 1.0, 10.0)])
def test_gamma_tail_domain(args):
    with pytest.raises(GeometryError):
        gamma_tail(*args)


# ---------------------------------------------------------------------------
# volume decay

def test_volume_decay_exponent():
    sec = Sector(np.zeros(2), 0.0, math.pi / 2, 1.0)
    p = ElasticCgoParams.for_direction(20.0, math.pi / 4 + math.pi, np.zeros(2), 0.0, LameParameters(1.0, 1.0))
    assert volume_decay_check(p, sec)["exponent"] == pytest.approx(2.0, abs=0.05)
    assert volume_decay_check(p, sec, B=1.0)["exponent"] == pytest.approx(3.0, abs=0.05)


def test_volume_decay_needs_separation():
    sec = Sector(np.zeros(2), 0.0, math.pi / 2, 1.0)
    p = ElasticCgoParams.for_direction(20.0, math.pi / 4, np.zeros(2), 0.0, LameParameters(1.0, 1.0))
    with pytest.raises(GeometryError, match="no negative separation"):
        volume_decay_check(p, sec)
