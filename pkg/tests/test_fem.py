import numpy as np
import pytest
import scipy.linalg as sla

from helmono import (
    Coefficient,
    HelmholtzSystem,
    assemble_boundary_load,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    boundary_load_matrix,
    build_unit_square_mesh,
    eval_p1_structured,
    l2_norm,
    mark_sigma,
    solve_helmholtz,
)
from helmono.errors import InvalidParameterError, ResonanceError


def _mesh(n, selector="all"):
    return mark_sigma(build_unit_square_mesh(n), selector)


def test_stiffness_row_sums_vanish():
    s = assemble_stiffness(build_unit_square_mesh(8))
    row_sums = np.asarray(abs(s @ np.ones(s.shape[0])))
    assert row_sums.max() <= 1e-12


def test_stiffness_trace_two_triangles():
    s = assemble_stiffness(build_unit_square_mesh(1))
    assert abs(s.diagonal().sum() - 4.0) <= 1e-12


def test_stiffness_kernel_is_constants():
    s = assemble_stiffness(build_unit_square_mesh(4)).toarray()
    w = np.linalg.eigvalsh(s)
    assert abs(w[0]) <= 1e-12
    assert w[1] > 1e-8  # zero eigenvalue is simple on a connected mesh


def test_stiffness_exact_symmetry():
    s = assemble_stiffness(build_unit_square_mesh(6))
    assert (s != s.T).nnz == 0


def test_assembly_rejects_degenerate_triangle():
    from helmono import Mesh

    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    triangles = np.array([[0, 1, 3], [0, 1, 1]])  # second has zero area
    boundary = np.array([[0, 1], [1, 3], [3, 2], [2, 0]])
    bad = Mesh(vertices, triangles, boundary, np.zeros(4, dtype=bool))
    with pytest.raises(InvalidParameterError, match="degenerate triangle"):
        assemble_stiffness(bad)
    with pytest.raises(InvalidParameterError, match="degenerate triangle"):
        assemble_weighted_mass(bad, 1.0)


def test_mass_partition_of_unity():
    m = assemble_weighted_mass(build_unit_square_mesh(8), 1.0)
    assert abs(m.sum() - 1.0) <= 1e-12


def test_mass_zero_weight():
    m = assemble_weighted_mass(build_unit_square_mesh(4), 0.0)
    assert m.nnz == 0 or abs(m).max() == 0.0


def test_mass_linear_in_weight():
    mesh = build_unit_square_mesh(4)
    rng = np.random.default_rng(2)
    w = rng.uniform(0.5, 2.0, mesh.n_triangles)
    m1 = assemble_weighted_mass(mesh, w)
    m2 = assemble_weighted_mass(mesh, 2.0 * w)
    assert abs(m2 - 2.0 * m1).max() == 0.0


def test_mass_additive_in_weight():
    mesh = build_unit_square_mesh(4)
    rng = np.random.default_rng(3)
    w1 = rng.uniform(0.0, 1.0, mesh.n_triangles)
    w2 = rng.uniform(0.0, 1.0, mesh.n_triangles)
    lhs = assemble_weighted_mass(mesh, w1) + assemble_weighted_mass(mesh, w2)
    rhs = assemble_weighted_mass(mesh, w1 + w2)
    assert abs(lhs - rhs).max() <= 1e-15


def test_boundary_load_zero_flux():
    mesh = _mesh(4)
    load = assemble_boundary_load(mesh, np.zeros(mesh.boundary_edges.shape[0]))
    assert not load.any()


def test_boundary_load_perimeter():
    mesh = _mesh(8)
    load = assemble_boundary_load(mesh, np.ones(mesh.boundary_edges.shape[0]))
    assert abs(load.sum() - 4.0) <= 1e-12


def test_boundary_load_single_edge():
    mesh = _mesh(4)
    vals = np.zeros(mesh.boundary_edges.shape[0])
    vals[0] = 1.0
    load = assemble_boundary_load(mesh, vals)
    nz = np.flatnonzero(load)
    assert nz.size == 2
    h = mesh.boundary_edge_lengths()[0]
    assert np.allclose(load[nz], h / 2.0, rtol=0, atol=1e-15)


def test_boundary_load_unflagged_edge_rejected():
    mesh = _mesh(4, "bottom")
    vals = np.zeros(mesh.boundary_edges.shape[0])
    vals[~mesh.sigma_flags] = 1.0
    with pytest.raises(InvalidParameterError):
        assemble_boundary_load(mesh, vals)


def test_load_matrix_matches_vector_path():
    mesh = _mesh(4, "bottom")
    mat = boundary_load_matrix(mesh)
    vals = np.zeros(mesh.boundary_edges.shape[0])
    vals[np.flatnonzero(mesh.sigma_flags)[1]] = 2.5
    direct = assemble_boundary_load(mesh, vals)
    assert np.abs(mat @ vals - direct).max() == 0.0


def test_solve_zero_flux_gives_zero():
    mesh = _mesh(8)
    u = solve_helmholtz(mesh, 1.0, 1.0, np.zeros(mesh.boundary_edges.shape[0]))
    assert np.abs(u).max() == 0.0


def test_solve_linearity():
    mesh = _mesh(8)
    rng = np.random.default_rng(4)
    nb = mesh.boundary_edges.shape[0]
    g1 = rng.standard_normal(nb)
    g2 = rng.standard_normal(nb)
    system = HelmholtzSystem(mesh, 1.0, 1.0)
    u1 = system.solve(assemble_boundary_load(mesh, g1))
    u2 = system.solve(assemble_boundary_load(mesh, g2))
    u12 = system.solve(assemble_boundary_load(mesh, g1 + g2))
    scale = max(np.abs(u12).max(), 1.0)
    assert np.abs(u12 - (u1 + u2)).max() <= 1e-10 * scale


def test_galerkin_orthogonality():
    mesh = _mesh(8)
    system = HelmholtzSystem(mesh, 1.3, 1.7)
    load = assemble_boundary_load(mesh, np.ones(mesh.boundary_edges.shape[0]))
    u = system.solve(load)
    residual = system.matrix @ u - load
    scale = abs(system.matrix).max() * np.abs(u).max() + np.abs(load).max()
    assert np.abs(residual).max() <= 1e-10 * scale


def test_system_matrix_symmetric_exactly():
    mesh = _mesh(6)
    system = HelmholtzSystem(mesh, 1.0, 2.0)
    assert abs(system.matrix - system.matrix.T).max() == 0.0


def test_resonant_wavenumber_detected():
    mesh = _mesh(8)
    s = assemble_stiffness(mesh).toarray()
    m = assemble_mass(mesh).toarray()
    rho = np.sort(sla.eigh(s, m, eigvals_only=True))
    k_star = float(np.sqrt(rho[1]))  # first nonzero Neumann eigenvalue
    with pytest.raises(ResonanceError) as info:
        HelmholtzSystem(mesh, 1.0, k_star)
    assert info.value.smallest_pivot <= info.value.threshold


def test_zero_coefficient_rejected_for_solve():
    mesh = _mesh(4)
    with pytest.raises(InvalidParameterError):
        HelmholtzSystem(mesh, 0.0, 1.0)


def test_coefficient_helpers():
    mesh = build_unit_square_mesh(4)
    q = Coefficient.constant(mesh, 1.5)
    assert q.min == q.max == 1.5
    arr = Coefficient.from_array(mesh, np.full(mesh.n_triangles, 2.0))
    assert arr.max == 2.0
    with pytest.raises(InvalidParameterError):
        Coefficient.from_array(mesh, np.ones(3))


def test_refinement_shrinks_error():
    # coarse and mid solutions against a fine reference: mid error at least
    # 3x smaller (second-order convergence gives ~16x; the bound is loose)
    k = 1.0
    fine = _mesh(128)
    u_fine = solve_helmholtz(fine, 1.0, k, np.ones(fine.boundary_edges.shape[0]))

    def error_on_fine(n):
        mesh = _mesh(n)
        u = solve_helmholtz(mesh, 1.0, k, np.ones(mesh.boundary_edges.shape[0]))
        interp = eval_p1_structured(mesh, u, fine.vertices)
        return l2_norm(fine, interp - u_fine)

    e16 = error_on_fine(16)
    e64 = error_on_fine(64)
    assert e64 < e16 / 3.0
