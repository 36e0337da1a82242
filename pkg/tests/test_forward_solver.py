from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import null_space

from disloc.geometry import Fault, GeometryError, JumpData, LameParameters, LayeredDomain, MeasurementArc
from disloc.forward_solver import (assemble, element_mass, element_stiffness, measure, solve_forward,
                                   solve_system)
from disloc.mesh import generate_mesh, structured_square_mesh

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def domain(interfaces=(), layers=(LameParameters(1.0, 1.0),), dirichlet=(0,), omega=0.0):
    return LayeredDomain(SQUARE, dirichlet, MeasurementArc(2), tuple(interfaces), tuple(layers), omega)


def test_element_stiffness_kernel():
    P = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    K = element_stiffness(P, 1.0, 1.0)[0]
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    w = np.linalg.eigvalsh(K)
    assert np.all(w > -1e-12)
    N = null_space(K, rcond=1e-10)
    assert N.shape[1] == 3
    # translations and the infinitesimal rotation lie in the kernel
    x = P[0]
    rigid = [np.tile([1.0, 0.0], 3), np.tile([0.0, 1.0], 3), np.column_stack([-x[:, 1], x[:, 0]]).ravel()]
    for r in rigid:
        np.testing.assert_allclose(K @ r, 0, atol=1e-13)


def test_mass_total_is_twice_area():
    m = structured_square_mesh(5)
    Me = element_mass(m.nodes[m.triangles])
    assert Me.sum() == pytest.approx(2 * 1.0, rel=1e-14)


def test_global_dimension_and_symmetry():
    f = Fault([[0.3, 0.5], [0.7, 0.5]])
    m = generate_mesh(domain(), f, 0.1)
    s = assemble(m, domain())
    assert s.K.shape == (2 * m.n_nodes,) * 2
    assert abs(s.K - s.K.T).max() < 1e-12


def test_equal_layers_match_single_layer():
    gam = np.array([[0.0, 0.55], [1.0, 0.55]])
    one = domain()
    two = domain([gam], (LameParameters(1.0, 1.0), LameParameters(1.0, 1.0)))
    m = generate_mesh(two, None, 0.1)
    merged = lambda mesh: replace(mesh, layer=np.zeros_like(mesh.layer))
    with pytest.raises(GeometryError):
        assemble(m, one)
    np.testing.assert_allclose(assemble(m, two).K.toarray(), assemble(merged(m), one).K.toarray(), atol=1e-13)
    f = Fault([[0.3, 0.3], [0.5, 0.4], [0.7, 0.3]])
    m = generate_mesh(two, f, 0.08)
    jumps = JumpData.constant(2, (1.0, 0.0), (0.0, 0.5))
    u1 = solve_system(merged(m), one, f, jumps).u
    u2 = solve_system(m, two, f, jumps).u
    assert np.abs(u1 - u2).max() <= 1e-12 * np.abs(u1).max()


def test_zero_data_zero_field():
    f = Fault([[0.3, 0.3], [0.7, 0.3], [0.7, 0.7], [0.3, 0.7]], closed=True)
    field = solve_forward(domain(), f, JumpData.constant(4), 0.1)
    assert np.abs(field.u).max() == 0.0
    meas = measure(field, domain(), 21)
    assert np.abs(meas.u).max() == 0.0


def test_constant_jump_imposed_exactly():
    f = Fault([[0.3, 0.5], [0.7, 0.5]])
    field = solve_forward(domain(), f, JumpData.constant(1, (1.0, 0.0)), 0.08)
    np.testing.assert_allclose(field.nodal_jumps(), np.tile([1.0, 0.0], (len(field.mesh.pairs), 1)),
                               atol=1e-15)
    assert np.abs(field.u.imag).max() <= 1e-12


def test_rigid_motion_reproduced():
    dom = domain(dirichlet=(0, 1, 2, 3))
    rigid = lambda x: np.column_stack([0.3 - 0.2 * x[:, 1], -0.1 + 0.2 * x[:, 0]])
    field = solve_forward(dom, None, None, 0.1, dirichlet=rigid)
    np.testing.assert_allclose(field.u.real, rigid(field.mesh.nodes), atol=1e-10)


def test_measurement_sampling_nested():
    f = Fault([[0.3, 0.4], [0.5, 0.6], [0.7, 0.45]])
    field = solve_forward(domain(), f, JumpData.constant(2, (1.0, 0.0), (0.0, 1.0)), 0.08)
    coarse = measure(field, domain(), 11)
    fine = measure(field, domain(), 101)
    np.testing.assert_allclose(fine.u[::10], coarse.u, atol=1e-12)
    np.testing.assert_allclose(fine.s[::10], coarse.s, atol=1e-12)


def test_solution_deterministic():
    f = Fault([[0.3, 0.4], [0.5, 0.6], [0.7, 0.45]])
    j = JumpData.constant(2, (1.0, 0.0), (0.0, 1.0))
    a = measure(solve_forward(domain(), f, j, 0.08), domain()).to_csv()
    b = measure(solve_forward(domain(), f, j, 0.08), domain()).to_csv()
    assert a == b


def test_time_harmonic_solution_finite():
    dom = domain(omega=1.5)
    f = Fault([[0.3, 0.5], [0.7, 0.5]])
    field = solve_forward(dom, f, JumpData.constant(1, (1.0, 0.0)), 0.08)
    assert np.all(np.isfinite(field.u))
    np.testing.assert_allclose(field.nodal_jumps()[:, 0], 1.0, atol=1e-14)
