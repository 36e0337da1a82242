import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disloc.geometry import (Fault, GeometryError, JumpData, LameParameters, LayeredDomain, MeasurementArc,
                             check_admissibility, detect_corners, load_geometry, rotation, theta_matrix,
                             validate_lame, validate_partition, weighted_jump_norm)

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def square_domain(interfaces=(), layers=None):
    layers = layers or [LameParameters(1.0 + i, 1.0 + i) for i in range(len(interfaces) + 1)]
    return LayeredDomain(SQUARE, (0,), MeasurementArc(2), tuple(interfaces), tuple(layers))


# ---------------------------------------------------------------------------
# Lame parameters

@pytest.mark.parametrize("lam, mu, ok", [(1.0, 1.0, True), (-0.9, 1.0, True), (1.0, 0.0, False),
                                         (-1.0, 1.0, False)])
def test_validate_lame(lam, mu, ok):
    rep = validate_lame(LameParameters(lam, mu))
    assert rep.ok is ok


def test_validate_lame_message():
    rep = validate_lame(LameParameters(1.0, 0.0))
    assert any("mu > 0 fails" in v.message for v in rep.violations)


# ---------------------------------------------------------------------------
# layered partitions

def test_partition_two_layers_ok():
    assert validate_partition(square_domain([[[0, 0.5], [1, 0.5]]])).ok


def test_partition_crossing_interfaces():
    dom = square_domain([[[0, 0.3], [1, 0.7]], [[0, 0.7], [1, 0.3]]])
    assert not validate_partition(dom).ok


def test_partition_layers_one_and_three_touch():
    dom = square_domain([[[0, 0.3], [0.5, 0.5], [1, 0.3]], [[0, 0.7], [0.5, 0.5], [1, 0.7]]])
    assert not validate_partition(dom).ok


def test_partition_equal_adjacent_layers_rejected():
    dom = square_domain([[[0, 0.5], [1, 0.5]]], [LameParameters(1, 1), LameParameters(1, 1)])
    assert not validate_partition(dom).ok


def test_partition_single_violation_reported_once():
    dom = square_domain([[[0, 0.5], [1, 0.5]]], [LameParameters(1, 1), LameParameters(1, 0)])
    assert len(validate_partition(dom).violations) == 1


def test_load_geometry_pointer_for_bad_layer():
    cfg = {"outer": SQUARE.tolist(), "layers": [{"lambda": 1}], "measurement_arc": {"edge": 2}}
    with pytest.raises(GeometryError) as exc:
        load_geometry(cfg)
    assert exc.value.pointer == "/layers/0"


# ---------------------------------------------------------------------------
# corners

def test_l_shape_one_right_corner():
    cs = detect_corners(Fault([[0.2, 0.3], [0.6, 0.3], [0.6, 0.7]]))
    assert len(cs) == 1
    assert cs[0].theta == pytest.approx(math.pi / 2, abs=1e-14)


def test_straight_polyline_no_corner():
    assert detect_corners(Fault([[0.2, 0.3], [0.5, 0.4], [0.8, 0.5]])) == []


def test_closed_square_four_corners():
    f = Fault([[0.3, 0.3], [0.7, 0.3], [0.7, 0.7], [0.3, 0.7]], closed=True)
    cs = detect_corners(f, square_domain())
    assert len(cs) == 4
    assert all(c.theta == pytest.approx(math.pi / 2, abs=1e-14) for c in cs)


def test_corner_on_interface_rejected():
    dom = square_domain([[[0, 0.5], [1, 0.5]]])
    with pytest.raises(GeometryError):
        detect_corners(Fault([[0.2, 0.3], [0.5, 0.5], [0.8, 0.3]]), dom)


def test_corner_layer_assignment():
    dom = square_domain([[[0, 0.5], [1, 0.5]]])
    cs = detect_corners(Fault([[0.2, 0.6], [0.5, 0.8], [0.8, 0.6]]), dom)
    assert [c.layer for c in cs] == [dom.layer_of(np.array([0.5, 0.8]))]


@settings(max_examples=40, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_corners_invariant_under_rigid_motion(phi, tx, ty):
    base = np.array([[0.3, 0.35], [0.55, 0.4], [0.5, 0.65], [0.7, 0.6]])
    R = rotation(phi)
    c0 = np.array([0.5, 0.5])
    moved = (base - c0) @ R.T + c0 + [tx, ty]
    a = detect_corners(Fault(base))
    b = detect_corners(Fault(moved))
    assert len(a) == len(b)
    for ca, cb in zip(a, b):
        assert ca.theta == pytest.approx(cb.theta, abs=1e-9)
        assert ca.sector_side == cb.sector_side


# ---------------------------------------------------------------------------
# admissibility

def _canonical_corner():
    """Open L with the corner sector spanning from +x (Gamma^-) to +y (Gamma^+)."""
    for verts in ([[0.7, 0.3], [0.3, 0.3], [0.3, 0.7]], [[0.3, 0.7], [0.3, 0.3], [0.7, 0.3]]):
        f = Fault(verts)
        c = detect_corners(f)[0]
        if abs(c.theta_min) < 1e-12:
            return f, c
    raise AssertionError("no orientation with theta_min = 0")


def _jumps(corner, f_minus, f_plus, g_minus, g_plus, slope=(0.0, 0.0), fault=None):
    """Per-segment linear f taking the given values at the corner."""
    fault = fault or _canonical_corner()[0]
    f = [None, None]
    g = [None, None]
    for seg, val in ((corner.minus_edge, f_minus), (corner.plus_edge, f_plus)):
        a, _ = fault.segment(seg)
        s_c = 0.0 if np.allclose(a, corner.point) else fault.segment_length(seg)
        f[seg] = np.array([np.asarray(val, float) - s_c * np.asarray(slope), slope])
    g[corner.minus_edge] = np.array([g_minus])
    g[corner.plus_edge] = np.array([g_plus])
    return JumpData(tuple(f), tuple(g))


def test_assumption_one():
    fault, c = _canonical_corner()
    rep = check_admissibility(fault, _jumps(c, (0, 1), (1, 0), (0, 0), (0, 0)))
    assert rep.assumption_I == [True] and rep.overall


def test_equal_f_with_gradient_inadmissible():
    fault, c = _canonical_corner()
    rep = check_admissibility(fault, _jumps(c, (1, 1), (1, 1), (1, 0), (1, 0), slope=(0.5, 0)))
    assert not rep.overall


def test_assumption_two_theta_relation():
    fault, c = _canonical_corner()
    # Theta(pi/2) (1, 0) = (0, -1)
    bad = check_admissibility(fault, _jumps(c, (1, 1), (1, 1), (1, 0), (0, -1)))
    good = check_admissibility(fault, _jumps(c, (1, 1), (1, 1), (1, 0), (1, 0)))
    assert not bad.overall
    assert good.assumption_II == [True] and good.overall


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_admissibility_symmetric_under_edge_swap(g):
    fault, c = _canonical_corner()
    gm, gp = np.array(g[:2]), np.array(g[2:])
    a = check_admissibility(fault, _jumps(c, (1, 1), (1, 1), gm, gp)).overall
    # relabel: the canonical Theta is an involution, so the swapped data carries the same verdict
    b = bool(np.max(np.abs(gm - theta_matrix(math.pi / 2) @ gp)) > 1e-12)
    assert a == b


# ---------------------------------------------------------------------------
# Theta matrix

def test_theta_half_pi():
    np.testing.assert_allclose(theta_matrix(math.pi / 2), [[0, -1], [-1, 0]], atol=1e-16)


def test_theta_third_pi():
    r3 = math.sqrt(3) / 2
    np.testing.assert_allclose(theta_matrix(math.pi / 3), [[-0.5, -r3], [-r3, 0.5]], atol=1e-15)


@pytest.mark.parametrize("bad", [0.0, math.pi, -0.1, 4.0])
def test_theta_outside_range(bad):
    with pytest.raises(GeometryError):
        theta_matrix(bad)


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-6, math.pi - 1e-6))
def test_theta_properties(theta):
    T = theta_matrix(theta)
    np.testing.assert_allclose(T, T.T, atol=1e-12)
    np.testing.assert_allclose(T @ T, np.eye(2), atol=1e-12)
    assert np.linalg.det(T) == pytest.approx(-1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# weighted norm

def test_weighted_norm_zero():
    res = weighted_jump_norm(lambda s: np.zeros(np.shape(s)), length=1.0)
    assert res.value == 0.0 and not res.diverges


def test_weighted_norm_linear_vanishing_converges():
    res = weighted_jump_norm(lambda s: np.minimum(s, 1 - s), length=1.0)
    assert not res.diverges
    assert np.isfinite(res.value)


def test_weighted_norm_constant_diverges():
    res = weighted_jump_norm(lambda s: np.ones(np.shape(s)), length=1.0)
    assert res.diverges
