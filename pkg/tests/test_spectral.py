import math

import numpy as np
import pytest
import scipy.linalg as sla

from helmono import (
    assemble_mass,
    assemble_stiffness,
    build_unit_square_mesh,
    count_K_eigs_above_one,
    count_negative,
    d_of_q,
    is_resonance,
    mark_sigma,
    nearest_neumann_eigenvalue,
    neumann_eigenvalues,
    solve_helmholtz,
)
from helmono.errors import InvalidParameterError, SpectralAmbiguityError

PI2 = math.pi ** 2


def test_top_eigenvalue_is_k_squared():
    mesh = build_unit_square_mesh(32)
    result = neumann_eigenvalues(mesh, 1.0, 1.0, 3)
    assert abs(result.values[0] - 1.0) <= 1e-3


def test_second_eigenvalue_analytic():
    mesh = build_unit_square_mesh(32)
    result = neumann_eigenvalues(mesh, 1.0, 1.0, 3)
    exact = 1.0 - PI2
    assert abs(result.values[1] - exact) <= 0.02 * abs(exact)


def test_zero_coefficient_spectrum():
    # q = 0 turns the pencil into the negated Laplacian; constants give 0
    mesh = build_unit_square_mesh(8)
    result = neumann_eigenvalues(mesh, 0.0, 1.0, 3)
    assert abs(result.values[0]) <= 1e-10
    assert result.values[1] < -1.0


def test_eigenvalues_sorted_and_residuals_checked():
    mesh = build_unit_square_mesh(8)
    result = neumann_eigenvalues(mesh, 1.0, 2.0, 6, want_vectors=True)
    assert (np.diff(result.values) <= 1e-12).all()
    s = assemble_stiffness(mesh).toarray()
    m = assemble_mass(mesh).toarray()
    a = 4.0 * assemble_mass(mesh).toarray() - s  # k^2 M_q with q identically 1
    for j, lam in enumerate(result.values):
        v = result.vectors[:, j]
        res = np.linalg.norm(a @ v - lam * (m @ v))
        assert res <= 1e-6 * max(1.0, abs(lam))


def test_d_of_q_analytic_counts():
    mesh = build_unit_square_mesh(32)
    assert d_of_q(mesh, 1.0, 1.0) == 1
    assert d_of_q(mesh, 1.0, 4.0) == 3


def test_d_of_q_small_constant():
    # k^2 q0 below the first positive Laplacian eigenvalue: only constants
    mesh = build_unit_square_mesh(8)
    assert d_of_q(mesh, 0.1, 1.0) == 1


def test_d_of_q_ambiguous_near_resonance():
    mesh = build_unit_square_mesh(8)
    s = assemble_stiffness(mesh).toarray()
    m = assemble_mass(mesh).toarray()
    rho = np.sort(sla.eigh(s, m, eigvals_only=True))
    k_star = float(np.sqrt(rho[1]))
    with pytest.raises(SpectralAmbiguityError):
        d_of_q(mesh, 1.0, k_star)


def test_count_k_matches_d():
    mesh = build_unit_square_mesh(16)
    rng = np.random.default_rng(7)
    for _ in range(20):
        q = rng.uniform(0.5, 2.0, mesh.n_triangles)
        assert count_K_eigs_above_one(mesh, q, 1.0) == d_of_q(mesh, q, 1.0)


def test_count_k_zero_coefficient():
    mesh = build_unit_square_mesh(8)
    assert count_K_eigs_above_one(mesh, 0.0, 1.0) == 0
    assert count_K_eigs_above_one(mesh, 0.0, 3.0) == 0


def test_count_k_unit_coefficient():
    mesh = build_unit_square_mesh(32)
    assert count_K_eigs_above_one(mesh, 1.0, 1.0) == 1


def test_d_monotone_in_q():
    mesh = build_unit_square_mesh(8)
    rng = np.random.default_rng(10)
    for _ in range(10):
        q1 = rng.uniform(0.3, 1.5, mesh.n_triangles)
        q2 = q1 + rng.uniform(0.0, 2.0, mesh.n_triangles)
        d1 = d_of_q(mesh, q1, 2.0)
        d2 = d_of_q(mesh, q2, 2.0)
        assert d1 <= d2
        assert d2 <= d_of_q(mesh, float(q2.max()), 2.0)


def test_resonance_detection():
    mesh = build_unit_square_mesh(64)
    assert is_resonance(mesh, 1.0, math.pi, tol=1e-2)
    assert not is_resonance(mesh, 1.0, 1.0, tol=1e-2)


def test_nonresonant_solve_consistency():
    mesh = mark_sigma(build_unit_square_mesh(8), "all")
    assert not is_resonance(mesh, 1.0, 1.0)
    u = solve_helmholtz(mesh, 1.0, 1.0, np.ones(mesh.boundary_edges.shape[0]))
    assert np.isfinite(u).all()


def test_nearest_eigenvalue_signed():
    mesh = build_unit_square_mesh(16)
    near = nearest_neumann_eigenvalue(mesh, 1.0, 1.0)
    assert abs(near - 1.0) <= 1e-3  # top eigenvalue is the closest to zero


def test_count_negative_example_rows():
    assert count_negative(np.diag([-1.0, 2.0, 3.0]), tol=1e-8).negative == 1
    zero = count_negative(np.zeros((4, 4)))
    assert zero.negative == 0
    assert zero.indeterminate == 0


def test_count_negative_against_brute_force():
    rng = np.random.default_rng(20)
    a = rng.standard_normal((20, 20))
    a = 0.5 * (a + a.T)
    result = count_negative(a)
    w = np.linalg.eigvalsh(a)
    assert result.negative == int((w < -result.tol).sum())


def test_count_negative_inertia_identity():
    a = np.diag([-1.0, 0.0, 2.0, 3.0, -5.0])
    neg = count_negative(a).negative
    pos = count_negative(-a).negative
    assert neg == 2 and pos == 2
    assert neg + pos + 1 == a.shape[0]  # one exact zero eigenvalue


def test_count_negative_rejects_asymmetry():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(InvalidParameterError):
        count_negative(a)


def test_count_negative_explicit_tol_positive():
    with pytest.raises(InvalidParameterError):
        count_negative(np.eye(2), tol=0.0)


def test_count_negative_indeterminate_band():
    tol = 1e-6
    a = np.diag([-tol, -10.0, 1.0])
    result = count_negative(a, tol=tol)
    # the eigenvalue at exactly -tol is flagged, not silently counted
    assert result.indeterminate == 1
    assert result.negative == 1


def test_spectrum_deterministic_iterative_path():
    # large enough to take the shift-invert route; bitwise repeatability
    mesh = build_unit_square_mesh(40)
    a = neumann_eigenvalues(mesh, 1.0, 1.0, 6).values
    b = neumann_eigenvalues(mesh, 1.0, 1.0, 6).values
    assert (a == b).all()


def test_count_request_bounds():
    mesh = build_unit_square_mesh(4)
    with pytest.raises(InvalidParameterError):
        neumann_eigenvalues(mesh, 1.0, 1.0, 0)
    with pytest.raises(InvalidParameterError):
        neumann_eigenvalues(mesh, 1.0, 1.0, mesh.n_vertices + 1)
