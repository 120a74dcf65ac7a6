"""Boundary bases, Neumann-to-Dirichlet matrices and probing operators.

Everything downstream of the forward solver observes the domain through a
finite orthonormal family of boundary fluxes supported on the instrumented
part of the boundary.  This module builds those families (piecewise-constant
per edge, optionally grouped into contiguous arc-length segments), assembles
the Galerkin Neumann-to-Dirichlet matrix

    Lambda(q)[i, j] = integral_Sigma( b_i  trace(u^{(b_j)}) ) ds,

the probing operator ``T_B`` of a region (the ``k^2``-weighted interior
energy of background solutions) and region Gram matrices, and solves the
localized-potential maximization problem: find a flux, orthogonal to a given
finite family, whose solution energy concentrates in one region while staying
small in another.

All operators carry the identity of the basis they were assembled on; mixing
bases is refused downstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from .errors import EigenSolverError, InvalidParameterError, SolverError
from .fem import (
    CoefficientLike,
    HelmholtzSystem,
    assemble_weighted_mass,
    boundary_load_matrix,
)
from .mesh import Mesh, Region

#: Raw operator matrices may deviate from exact symmetry by at most this
#: relative amount before being symmetrized.
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class BoundaryBasis:
    """Orthonormal edgewise-constant flux family on the flagged boundary part.

    ``edge_indices`` point into the mesh's boundary edge list (loop order);
    ``functions[e, j]`` is the value of basis function ``j`` on flagged edge
    ``e``; ``lengths`` are the edge lengths.  The family is orthonormal in
    the boundary L2 inner product: ``functions.T @ diag(lengths) @ functions``
    is the identity.  ``basis_id`` is a content hash used to match operators
    assembled on the same basis.
    """

    edge_indices: np.ndarray
    functions: np.ndarray
    lengths: np.ndarray
    group_of_edge: np.ndarray
    basis_id: str

    def __post_init__(self):
        for name in ("edge_indices", "functions", "lengths", "group_of_edge"):
            getattr(self, name).setflags(write=False)

    @property
    def dim(self) -> int:
        return self.functions.shape[1]

    @property
    def n_edges(self) -> int:
        return self.functions.shape[0]


def boundary_basis(mesh: Mesh, segments: Optional[int] = None) -> BoundaryBasis:
    """Build the flux basis on the flagged part of the boundary.

    With ``segments=None`` every flagged edge carries its own normalized
    indicator (dimension = number of flagged edges).  With ``segments=m`` the
    flagged part is cut into ``m`` contiguous groups of equal arc length,
    measured along the boundary loop from its canonical start; the cut points
    depend only on the geometry, not on the mesh resolution, so bases with
    ``m`` and ``2m`` segments are nested across refinements of the same
    domain.

    Raises
    ------
    InvalidParameterError
        If no edge is flagged, or ``segments`` exceeds the flagged edge count
        (some group would be empty).
    """
    idx = np.flatnonzero(mesh.sigma_flags)
    if idx.size == 0:
        raise InvalidParameterError("no boundary edge is flagged")
    lengths = mesh.boundary_edge_lengths()[idx]
    if segments is None:
        m = idx.size
        group = np.arange(m)
    else:
        m = int(segments)
        if not (1 <= m <= idx.size):
            raise InvalidParameterError(
                f"segments must be between 1 and {idx.size}, got {segments}"
            )
        total = lengths.sum()
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        mid = 0.5 * (cum[:-1] + cum[1:])
        group = np.minimum((mid / total * m).astype(int), m - 1)
        present = np.unique(group)
        if present.size != m:
            raise InvalidParameterError(
                f"segmentation into {m} groups left some group empty"
            )
    group_lengths = np.bincount(group, weights=lengths, minlength=m)
    functions = np.zeros((idx.size, m))
    functions[np.arange(idx.size), group] = 1.0 / np.sqrt(group_lengths[group])

    digest = hashlib.sha256()
    digest.update(np.int64(mesh.n_vertices).tobytes())
    digest.update(idx.astype(np.int64).tobytes())
    digest.update(group.astype(np.int64).tobytes())
    basis = BoundaryBasis(
        edge_indices=idx,
        functions=functions,
        lengths=lengths,
        group_of_edge=group,
        basis_id=digest.hexdigest()[:16],
    )
    gram = functions.T @ (lengths[:, None] * functions)
    if np.abs(gram - np.eye(m)).max() > 1e-12:
        raise SolverError("boundary basis failed orthonormality check")
    return basis


def basis_edge_values(basis: BoundaryBasis, coeffs: np.ndarray) -> np.ndarray:
    """Edgewise values of the flux with the given basis coefficients."""
    return basis.functions @ np.asarray(coeffs, dtype=float)


def project_onto_basis(basis: BoundaryBasis, edge_values: np.ndarray) -> np.ndarray:
    """Boundary-L2 projection of edgewise flux values onto the basis.

    Exact whenever the flux is piecewise constant on the basis's groups, which
    is how coarse-basis vectors are carried into a finer nested basis.
    """
    vals = np.asarray(edge_values, dtype=float)
    return basis.functions.T @ (basis.lengths[:, None] * vals if vals.ndim == 2
                                else basis.lengths * vals)


def basis_load_matrix(mesh: Mesh, basis: BoundaryBasis) -> np.ndarray:
    """Nodal load vectors of the basis functions, one column each.

    Column ``j`` is also the Riesz pairing used to read traces back:
    ``loads[:, j] @ u`` equals the boundary integral of ``b_j`` against the
    trace of ``u`` (the edge trapezoid rule is exact for P1 traces against
    edgewise-constant fluxes).
    """
    e = boundary_load_matrix(mesh)[:, basis.edge_indices]
    return np.asarray(e @ basis.functions)


@dataclass(frozen=True)
class SymOp:
    """A symmetric operator matrix expressed in a boundary basis."""

    matrix: np.ndarray
    basis_id: str
    label: str
    k: float

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __sub__(self, other: "SymOp") -> "SymOp":
        from .errors import BasisMismatchError

        if self.basis_id != other.basis_id:
            raise BasisMismatchError(
                f"cannot combine operators on bases {self.basis_id} and {other.basis_id}"
            )
        if self.k != other.k:
            raise BasisMismatchError(
                f"cannot combine operators at wavenumbers {self.k} and {other.k}"
            )
        return SymOp(
            matrix=self.matrix - other.matrix,
            basis_id=self.basis_id,
            label=f"{self.label}-{other.label}",
            k=self.k,
        )

    def scaled(self, factor: float) -> "SymOp":
        return SymOp(
            matrix=float(factor) * self.matrix,
            basis_id=self.basis_id,
            label=f"{factor:g}*{self.label}",
            k=self.k,
        )


def make_symop(raw: np.ndarray, basis_id: str, label: str, k: float,
               symmetry_rtol: float = SYMMETRY_RTOL) -> SymOp:
    """Validate near-symmetry of a raw operator matrix and symmetrize it."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise InvalidParameterError("operator matrix must be square")
    scale = float(np.abs(raw).max()) if raw.size else 0.0
    defect = float(np.abs(raw - raw.T).max()) if raw.size else 0.0
    if defect > symmetry_rtol * max(scale, 1e-300):
        raise SolverError(
            f"operator '{label}' symmetry defect {defect:.3e} "
            f"exceeds {symmetry_rtol:g} of scale {scale:.3e}"
        )
    return SymOp(matrix=0.5 * (raw + raw.T), basis_id=basis_id, label=label, k=float(k))


def basis_solutions(mesh: Mesh, q: CoefficientLike, k: float,
                    basis: BoundaryBasis) -> np.ndarray:
    """Nodal solutions for every basis flux, one column per basis function."""
    system = HelmholtzSystem(mesh, q, k)
    return system.solve_many(basis_load_matrix(mesh, basis))


def ntd_matrix(mesh: Mesh, q: CoefficientLike, k: float, basis: BoundaryBasis,
               label: str = "ntd") -> SymOp:
    """Neumann-to-Dirichlet matrix of ``(q, k)`` on the basis.

    Entry ``(i, j)`` is the boundary integral of basis flux ``i`` against the
    trace of the solution driven by basis flux ``j``.  Symmetric up to solver
    roundoff (checked, then symmetrized exactly).
    """
    loads = basis_load_matrix(mesh, basis)
    system = HelmholtzSystem(mesh, q, k)
    solutions = system.solve_many(loads)
    return make_symop(loads.T @ solutions, basis.basis_id, label, k)


def gram_from_solutions(mesh: Mesh, region: Region, basis: BoundaryBasis,
                        solutions: np.ndarray, weight: float = 1.0,
                        label: str = "gram", k: float = 0.0) -> SymOp:
    """Interior Gram matrix ``G[i, j] = weight * integral_R( u_i u_j )``.

    An empty region gives the zero operator.
    """
    if region.triangle_flags.shape != (mesh.n_triangles,):
        raise InvalidParameterError("region does not match mesh triangle count")
    if region.is_empty:
        raw = np.zeros((basis.dim, basis.dim))
    else:
        w = assemble_weighted_mass(mesh, region.triangle_flags.astype(float) * weight)
        raw = solutions.T @ (w @ solutions)
    return make_symop(raw, basis.basis_id, label, k)


def tb_matrix(mesh: Mesh, region: Region, k: float, basis: BoundaryBasis) -> SymOp:
    """Probing operator of a region: ``k^2``-weighted energy of background
    (coefficient one) solutions inside it.  Positive semidefinite.

    Raises on an empty region: a probe with no support carries no test.
    """
    if region.is_empty:
        raise InvalidParameterError("probing region is empty")
    u1 = basis_solutions(mesh, 1.0, k, basis)
    return tb_from_solutions(mesh, region, k, basis, u1)


def tb_from_solutions(mesh: Mesh, region: Region, k: float, basis: BoundaryBasis,
                      background_solutions: np.ndarray) -> SymOp:
    """Probing operator from precomputed background solutions (shared across
    many regions, e.g. all pixels of a reconstruction grid)."""
    if region.is_empty:
        raise InvalidParameterError("probing region is empty")
    return gram_from_solutions(mesh, region, basis, background_solutions,
                               weight=k * k, label="tb", k=k)


def region_gram(mesh: Mesh, q: CoefficientLike, k: float, basis: BoundaryBasis,
                region: Region) -> SymOp:
    """Gram matrix of solution restrictions to a region (unit weight)."""
    u = basis_solutions(mesh, q, k, basis)
    return gram_from_solutions(mesh, region, basis, u, weight=1.0, label="gram", k=k)


class LocalizedPotential(NamedTuple):
    """A flux concentrating solution energy in the probed region.

    ``ratio`` is the attained Rayleigh quotient: energy in the target region
    over the regularized energy in the avoided region plus the penalized
    component along the excluded flux family.
    """

    g: np.ndarray
    ratio: float


def localized_potential(mesh: Mesh, q: CoefficientLike, k: float,
                        basis: BoundaryBasis, region_b: Region, region_d: Region,
                        v: Optional[np.ndarray] = None) -> LocalizedPotential:
    """Maximize solution energy in ``region_b`` against ``region_d`` and ``V``.

    Solves the regularized generalized eigenproblem

        G_B g = rho ( G_D + beta P_V + eps I ) g

    where ``G_R`` is the region Gram of the ``(q, k)`` solutions, ``P_V``
    projects onto the span of the columns of ``v`` (excluded fluxes), ``beta``
    scales the penalty to the size of ``G_D`` and ``eps`` keeps the right side
    definite.  The top eigenvector is cleaned of any residual ``V`` component
    and normalized; its attained quotient is returned with it.

    Preconditions: ``region_b`` minus ``region_d`` has positive area, and
    ``v`` (if given) has independent columns, fewer than the basis dimension.
    """
    if region_b.minus(region_d).is_empty:
        raise InvalidParameterError(
            "target region must have positive area outside the avoided region"
        )
    dim = basis.dim
    if v is None:
        v = np.zeros((dim, 0))
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] != dim:
        raise InvalidParameterError(f"excluded family must be ({dim}, p)")
    p = v.shape[1]
    if p >= dim:
        raise InvalidParameterError("excluded family must have fewer columns than dim")
    if p and np.linalg.matrix_rank(v) < p:
        raise InvalidParameterError("excluded family has dependent columns")

    solutions = basis_solutions(mesh, q, k, basis)
    g_b = gram_from_solutions(mesh, region_b, basis, solutions, label="gram_b", k=k).matrix
    g_d = gram_from_solutions(mesh, region_d, basis, solutions, label="gram_d", k=k).matrix

    if p:
        q_orth, _ = np.linalg.qr(v)
        projector = q_orth @ q_orth.T
        beta = float(np.trace(g_d)) / p
    else:
        projector = np.zeros((dim, dim))
        beta = 0.0
    core = g_d + beta * projector
    eps_scale = float(np.trace(core)) / dim
    if eps_scale <= 0.0:
        eps_scale = float(np.trace(g_b)) / dim
    if eps_scale <= 0.0:
        raise EigenSolverError("regularizer scale collapsed: no solution energy anywhere")
    eps = 1e-10 * eps_scale
    rhs = core + eps * np.eye(dim)

    try:
        w, vecs = sla.eigh(0.5 * (g_b + g_b.T), 0.5 * (rhs + rhs.T))
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise EigenSolverError(f"localization pencil breakdown: {exc}") from exc
    g = vecs[:, -1]
    if p:
        g = g - projector @ g
    norm = np.linalg.norm(g)
    if norm <= 1e-14:
        raise EigenSolverError("maximizer lies entirely inside the excluded family")
    g = g / norm
    top = int(np.argmax(np.abs(g)))
    if g[top] < 0:
        g = -g
    if p:
        residual = np.linalg.norm(projector @ g)
        if residual > 1e-10:
            raise EigenSolverError(
                f"excluded-family residual {residual:.3e} after cleanup"
            )
    ratio = float((g @ g_b @ g) / (g @ rhs @ g))
    return LocalizedPotential(g=g, ratio=ratio)
