import math

import numpy as np
import pytest

from disloc.cgo import ElasticCgo, ElasticCgoParams
from disloc.corner_probe import relation_matrix
from disloc.dimred import (CutoffProfile, DimRedError, EdgeCorner3D, Extruded, HelmholtzWave2D, PlaneWave3D,
                           dimension_reduce, recover_jump_3d, reduced_residuals, z_ratio)
from disloc.geometry import LameParameters

LAME = LameParameters(2.0, 1.0)
OMEGA = 1.3
PHI = CutoffProfile(0.1, 0.8, 2.0)
RNG = np.random.default_rng(5)
PTS = RNG.uniform(-1, 1, (8, 2))


def test_profile_moments():
    m = CutoffProfile(0.0, 1.0, 2.0).moments()
    assert m["phi"] == pytest.approx(1.0, abs=1e-14)
    assert abs(m["dphi"]) < 1e-14
    assert abs(m["d2phi"]) < 1e-14


@pytest.mark.parametrize("kind", ["poly4", "poly6"])
@pytest.mark.parametrize("L", [0.25, 0.5, 0.8])
def test_profile_moments_relative(kind, L):
    # phi'' grows like 1/L^2, so the vanishing moment is checked against int |phi''|
    p = CutoffProfile(0.1, L, 2.0, kind)
    z, w = p.nodes()
    m = p.moments()
    assert m["phi"] == pytest.approx(1.0, abs=1e-14)
    assert abs(m["dphi"]) < 1e-14 * np.sum(w * np.abs(p.d1(z)))
    assert abs(m["d2phi"]) < 1e-14 * np.sum(w * np.abs(p.d2(z)))


def test_profile_shape():
    z = np.linspace(-2, 2, 401)
    assert np.all(PHI(z) >= 0)
    assert np.all(PHI(z[np.abs(z - 0.1) >= 0.8]) == 0)


def test_profile_support_inside_slab():
    with pytest.raises(DimRedError):
        CutoffProfile(0.5, 1.6, 2.0)
    assert CutoffProfile.default(2.0, 1.2).L == pytest.approx(0.3)


def test_reduce_x3_independent():
    h = lambda X: np.sin(X[..., 0]) * np.cos(X[..., 1])
    xp = PTS
    np.testing.assert_allclose(dimension_reduce(h, PHI)(xp), np.sin(xp[:, 0]) * np.cos(xp[:, 1]), atol=1e-14)


def test_reduce_linear_in_x3():
    val = dimension_reduce(lambda X: X[..., 2], PHI)(PTS)
    np.testing.assert_allclose(val, 0.1, atol=1e-14)


def test_reduce_linear_map():
    h1 = lambda X: np.exp(X[..., 0] * X[..., 2])
    h2 = lambda X: X[..., 1] * X[..., 2] ** 3
    a, b = 1.7, -0.4
    lhs = dimension_reduce(lambda X: a * h1(X) + b * h2(X), PHI)(PTS)
    rhs = a * dimension_reduce(h1, PHI)(PTS) + b * dimension_reduce(h2, PHI)(PTS)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_reduce_commutes_with_inplane_derivative():
    u = PlaneWave3D([0.3, 0.5, 0.8], LAME, OMEGA)
    step = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        Pu = dimension_reduce(u.value, PHI)
        fd = (Pu(PTS + e) - Pu(PTS - e)) / (2 * step)
        exact = dimension_reduce(lambda X: u.gradient(X)[..., j], PHI)(PTS)
        assert np.abs(fd - exact).max() < 1e-9


def test_residuals_extruded():
    planar = ElasticCgo(ElasticCgoParams.for_direction(2.0, 0.4, np.zeros(2), OMEGA, LAME))
    v = Extruded(planar, HelmholtzWave2D([1.0, 2.0], LAME, OMEGA))
    w = Extruded(planar)
    r = reduced_residuals(v, w, PHI, LAME, OMEGA, PTS)
    assert r["res_12"] < 1e-8 and r["res_3"] < 1e-8
    # x3-independent fields: both G terms vanish with the moments of phi' and phi''
    for k in r["G_terms"].values():
        assert np.abs(k["G_12"]).max() < 1e-12 and np.abs(k["G_3"]).max() < 1e-12


def test_residuals_plane_waves():
    v = PlaneWave3D([0.3, 0.5, 0.8], LAME, OMEGA)
    w = PlaneWave3D([0.1, -0.6, 0.7], LAME, OMEGA, kind="s", polarization=[1.0, 0.0, 0.0])
    r = reduced_residuals(v, w, PHI, LAME, OMEGA, PTS)
    assert r["res_12"] < 1e-6 and r["res_3"] < 1e-6


def test_residuals_zero_fields():
    class Zero(PlaneWave3D):
        def __init__(self):
            super().__init__([0, 0, 1], LAME, OMEGA, amp=0.0)

    r = reduced_residuals(Zero(), Zero(), PHI, LAME, OMEGA, PTS)
    assert r["res_12"] == 0 and r["res_3"] == 0


def test_non_solution_rejected():
    bad = PlaneWave3D([0.3, 0.5, 0.8], LAME, 2 * OMEGA)
    good = PlaneWave3D([0.3, 0.5, 0.8], LAME, OMEGA)
    with pytest.raises(DimRedError):
        reduced_residuals(bad, good, PHI, LAME, OMEGA, PTS)


@pytest.mark.parametrize("theta", np.linspace(0.1, math.pi - 0.1, 9))
def test_z_ratio_nondegenerate(theta):
    r = z_ratio(0.3, 0.3 + theta)
    assert r == pytest.approx(np.exp(1j * theta), abs=1e-15)
    assert abs(r + 1) > 1e-3


def _corner(theta, g_plus, g_minus, f=(1.0, 2.0, 0.3)):
    return EdgeCorner3D.constant([0.2, 0.1], 0.5, theta, 0.5, LAME, f, f, g_plus, g_minus)


def test_consistent_configuration():
    th = math.pi / 2
    g2 = np.array([0.1, 0.4, 0.0])
    g1 = np.concatenate([relation_matrix(th) @ g2[:2], [0.0]])
    r = recover_jump_3d(_corner(th, g1, g2), PHI)
    assert np.abs(r.delta_f).max() < 5e-3
    assert r.rotation_residual < 5e-3
    assert max(abs(r.g3[0]), abs(r.g3[1])) < 5e-3


@pytest.mark.parametrize("theta", [math.pi / 3, 2 * math.pi / 3])
def test_planted_third_component(theta):
    r = recover_jump_3d(_corner(theta, [0.3, 0.2, 0.7], [0.1, 0.4, 0.0]), PHI, rotation=False)
    assert abs(r.g3[0] - 0.7) < 5e-3
    assert abs(r.g3[1]) < 5e-3


def test_rescaled_profile():
    c = EdgeCorner3D.constant([0.2, 0.1], 0.5, math.pi / 2, 0.5, LAME, (1.0, 0.0, 0.2), (0.0, 0.0, 0.0),
                              (0.3, 0.2, 0.7), (0.1, 0.4, 0.0))
    a = recover_jump_3d(c, PHI, rotation=False)
    b = recover_jump_3d(c, PHI.rescaled(3.0), rotation=False)
    np.testing.assert_allclose(b.delta_pf, 3 * a.delta_pf, atol=3e-6)
    np.testing.assert_allclose(b.delta_f, a.delta_f, atol=1e-6)


def test_profile_independence():
    c = EdgeCorner3D.constant([0.2, 0.1], 0.5, math.pi / 2, 0.5, LAME, (1.0, 0.0, 0.2), (0.0, 0.0, 0.0),
                              (0.3, 0.2, 0.7), (0.1, 0.4, 0.0))
    a = recover_jump_3d(c, PHI, rotation=False)
    b = recover_jump_3d(c, CutoffProfile(-0.3, 0.5, 2.0, kind="poly6"), rotation=False)
    np.testing.assert_allclose(b.delta_f, a.delta_f, atol=1e-5)
    np.testing.assert_allclose(b.g3, a.g3, atol=1e-5)
