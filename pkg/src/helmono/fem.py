"""P1 finite elements for the Helmholtz Neumann problem.

Assembles the stiffness matrix ``S``, coefficient-weighted mass matrices
``M_w`` and boundary flux load vectors for piecewise-linear elements, and
solves the Galerkin system ``(S - k^2 M_q) u = b`` with a sparse direct
factorization.  Solutions satisfy, row by row,

    integral( grad u . grad phi_i - k^2 q u phi_i ) = integral_Sigma( g phi_i )

to the documented residual bound, which is the discrete variational identity
everything downstream (trace operators, energy identities, eigen counts)
relies on.

Near-singular factorizations are reported as :class:`ResonanceError`: the
wavenumber is (numerically) a Neumann eigenvalue of the configuration and the
forward map is undefined there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameterError, ResonanceError, SolverError
from .mesh import Mesh, Region

# A nodal field is a plain vector of vertex values.
NodalField = np.ndarray

#: Relative pivot threshold under which a factorization counts as singular.
PIVOT_RTOL = 1e-12
#: Relative residual bound every direct solve is checked against.
RESIDUAL_RTOL = 1e-10

_MASS_PATTERN = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class Coefficient:
    """Piecewise-constant coefficient, one value per triangle."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise InvalidParameterError("coefficient values must be a flat array")
        if not np.isfinite(vals).all():
            raise InvalidParameterError("coefficient contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @staticmethod
    def constant(mesh: Mesh, value: float) -> "Coefficient":
        return Coefficient(np.full(mesh.n_triangles, float(value)))

    @staticmethod
    def from_array(mesh: Mesh, values: Sequence[float]) -> "Coefficient":
        vals = np.asarray(values, dtype=float)
        if vals.shape != (mesh.n_triangles,):
            raise InvalidParameterError(
                f"expected {mesh.n_triangles} coefficient values, got {vals.shape}"
            )
        return Coefficient(vals)

    def with_region(self, region: Region, value: float) -> "Coefficient":
        """New coefficient equal to ``value`` on the region, unchanged elsewhere."""
        vals = self.values.copy()
        vals[region.triangle_flags] = float(value)
        return Coefficient(vals)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())


CoefficientLike = Union[Coefficient, float, int, np.ndarray, Sequence[float]]


def as_coefficient(mesh: Mesh, q: CoefficientLike) -> Coefficient:
    """Coerce a scalar, array or Coefficient to a validated Coefficient."""
    if isinstance(q, Coefficient):
        if q.values.shape != (mesh.n_triangles,):
            raise InvalidParameterError("coefficient does not match mesh triangle count")
        return q
    if np.isscalar(q):
        return Coefficient.constant(mesh, float(q))
    return Coefficient.from_array(mesh, q)


def _triangle_geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    areas = mesh.triangle_areas()
    if not (areas > 0.0).all():
        bad = int(np.argmin(areas))
        raise InvalidParameterError(
            f"degenerate triangle {bad} with signed area {areas[bad]:.3e}"
        )
    return p, areas


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Assemble ``S[i, j] = integral( grad phi_i . grad phi_j )``.

    Returns
    -------
    scipy.sparse.csr_matrix
        Symmetric positive semidefinite; its kernel is spanned by the
        constant vector (pure Neumann problem).
    """
    p, areas = _triangle_geometry(mesh)
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    perp = np.empty_like(edges)
    perp[:, :, 0] = -edges[:, :, 1]
    perp[:, :, 1] = edges[:, :, 0]
    local = np.einsum("tia,tja->tij", perp, perp) / (4.0 * areas)[:, None, None]
    return _scatter(mesh, local)


def assemble_weighted_mass(mesh: Mesh, w: CoefficientLike) -> sp.csr_matrix:
    """Assemble ``M_w[i, j] = integral( w phi_i phi_j )`` for piecewise-constant w."""
    w = as_coefficient(mesh, w)
    _, areas = _triangle_geometry(mesh)
    scale = areas * w.values
    local = scale[:, None, None] * _MASS_PATTERN[None, :, :]
    return _scatter(mesh, local)


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Unweighted mass matrix (w identically one)."""
    return assemble_weighted_mass(mesh, 1.0)


def boundary_load_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Map edgewise-constant boundary fluxes to nodal load vectors.

    Column ``e`` is the load vector of a unit flux on boundary edge ``e``:
    the trapezoid/exact rule ``integral_e(phi) = h_e / 2`` at both endpoints.
    All boundary edges get a column; restricting fluxes to the instrumented
    part is the caller's concern.
    """
    lengths = mesh.boundary_edge_lengths()
    nb = mesh.boundary_edges.shape[0]
    rows = mesh.boundary_edges.T.ravel()
    cols = np.tile(np.arange(nb), 2)
    data = np.tile(0.5 * lengths, 2)
    return sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_vertices, nb)).tocsr()


def assemble_boundary_load(mesh: Mesh, edge_values: Sequence[float]) -> NodalField:
    """Load vector of an edgewise-constant flux supported on flagged edges.

    ``edge_values`` has one entry per boundary edge; entries on unflagged
    edges must be zero (the flux lives on the instrumented part only).
    """
    vals = np.asarray(edge_values, dtype=float)
    nb = mesh.boundary_edges.shape[0]
    if vals.shape != (nb,):
        raise InvalidParameterError(f"expected {nb} edge values, got {vals.shape}")
    if np.any(vals[~mesh.sigma_flags] != 0.0):
        raise InvalidParameterError("flux prescribed on an edge outside the flagged part")
    return boundary_load_matrix(mesh) @ vals


class HelmholtzSystem:
    """Factorized Galerkin system ``(S - k^2 M_q) u = b`` for one ``(q, k)``.

    Factorizing once and solving for many right-hand sides is the workhorse
    behind trace operators, which need one solve per basis function.

    Raises
    ------
    ResonanceError
        If the matrix is singular or the smallest pivot magnitude falls at or
        below ``PIVOT_RTOL`` times the largest: the wavenumber is numerically
        resonant for this coefficient.
    """

    def __init__(self, mesh: Mesh, q: CoefficientLike, k: float):
        if not (k > 0.0 and np.isfinite(k)):
            raise InvalidParameterError(f"wavenumber must be positive and finite, got {k!r}")
        q = as_coefficient(mesh, q)
        if not q.values.any():
            raise InvalidParameterError("coefficient is identically zero")
        self.mesh = mesh
        self.q = q
        self.k = float(k)
        self.stiffness = assemble_stiffness(mesh)
        self.weighted_mass = assemble_weighted_mass(mesh, q)
        self.matrix = (self.stiffness - (k * k) * self.weighted_mass).tocsc()
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise ResonanceError(
                f"factorization failed at k={k:.17g}: {exc}", 0.0, 0.0
            ) from exc
        pivots = np.abs(self._lu.U.diagonal())
        small = float(pivots.min())
        threshold = PIVOT_RTOL * float(pivots.max())
        if small <= threshold:
            raise ResonanceError(
                f"near-singular system at k={k:.17g}: smallest pivot {small:.3e} "
                f"<= {threshold:.3e}",
                small,
                threshold,
            )
        self._matrix_norm = spla.norm(self.matrix, 1)

    def _check_residual(self, b: np.ndarray, u: np.ndarray) -> None:
        r = self.matrix @ u - b
        scale = self._matrix_norm * np.linalg.norm(u, axis=0) + np.linalg.norm(b, axis=0)
        bad = np.linalg.norm(r, axis=0) > RESIDUAL_RTOL * np.maximum(scale, 1e-300)
        if np.any(bad):
            raise SolverError(
                f"direct solve residual exceeded {RESIDUAL_RTOL:g} of scale"
            )

    def solve(self, load: NodalField) -> NodalField:
        """Solve for one load vector; the residual bound is verified."""
        b = np.asarray(load, dtype=float)
        if b.shape != (self.mesh.n_vertices,):
            raise InvalidParameterError("load vector does not match mesh size")
        u = self._lu.solve(b)
        self._check_residual(b, u)
        return u

    def solve_many(self, loads: np.ndarray) -> np.ndarray:
        """Solve for a block of load vectors (columns); residuals verified."""
        b = np.asarray(loads, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.mesh.n_vertices:
            raise InvalidParameterError("load block must be (n_vertices, m)")
        u = self._lu.solve(b)
        self._check_residual(b, u)
        return u


def solve_helmholtz(mesh: Mesh, q: CoefficientLike, k: float,
                    edge_values: Sequence[float]) -> NodalField:
    """Solve the Neumann problem for one edgewise-constant flux.

    Convenience wrapper: assembles, factorizes, checks resonance and solves.
    For many fluxes against one configuration build a
    :class:`HelmholtzSystem` once and reuse it.
    """
    system = HelmholtzSystem(mesh, q, k)
    return system.solve(assemble_boundary_load(mesh, edge_values))


def l2_norm(mesh: Mesh, u: NodalField) -> float:
    """L2 norm of a nodal field via the mass matrix."""
    u = np.asarray(u, dtype=float)
    m = assemble_mass(mesh)
    return float(np.sqrt(max(u @ (m @ u), 0.0)))
