"""Monotonicity comparisons, inclusion tests and scatterer reconstruction.

The ordering underneath everything is "less or equal up to a finite
defect": ``A <=_d B`` holds when ``B - A`` has at most ``d`` eigenvalues
below the count tolerance.  The forward theory supplies the defect budget:
ordered coefficients force ``Lambda(q1) <=_d Lambda(q2)`` with ``d`` the
number of positive Neumann eigenvalues of the larger coefficient, and a
scatterer region ``B`` inside the support ``D`` of a positive contrast forces
``alpha T_B <=_d Lambda(q) - Lambda(1)``.  Pixels of a reconstruction grid
are accepted or rejected by exactly that test.

Every verdict is a :class:`ComparisonResult` carrying the raw counts, the
tolerance used and the defect allowance, so a verdict can always be audited
against the counts that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BasisMismatchError, InvalidParameterError
from .fem import CoefficientLike, HelmholtzSystem, as_coefficient
from .mesh import Mesh, PixelGrid
from .ntd import (
    BoundaryBasis,
    SymOp,
    basis_load_matrix,
    make_symop,
    tb_from_solutions,
)
from .spectral import count_negative, d_of_q

_SWEEP_CAP = 20


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of one ``A <=_d B`` test.

    ``verdict`` is True exactly when the negative count fits the allowance
    and no eigenvalue was indeterminate at the tolerance used.
    """

    negative_count: int
    indeterminate_count: int
    d_allowed: int
    tol: float
    verdict: bool

    @staticmethod
    def from_counts(negative: int, indeterminate: int, d_allowed: int,
                    tol: float) -> "ComparisonResult":
        return ComparisonResult(
            negative_count=negative,
            indeterminate_count=indeterminate,
            d_allowed=d_allowed,
            tol=tol,
            verdict=(negative <= d_allowed and indeterminate == 0),
        )


def leq_d(a: SymOp, b: SymOp, d: int, tol: Optional[float] = None) -> ComparisonResult:
    """Test ``a <=_d b``: does ``b - a`` have at most ``d`` negative eigenvalues?

    Both operators must live on the same boundary basis and wavenumber.
    """
    if not isinstance(d, (int, np.integer)) or d < 0:
        raise InvalidParameterError(f"defect allowance must be a nonnegative integer, got {d!r}")
    if a.basis_id != b.basis_id:
        raise BasisMismatchError(
            f"operators on different bases: {a.basis_id} vs {b.basis_id}"
        )
    if a.k != b.k:
        raise BasisMismatchError(f"operators at different wavenumbers: {a.k} vs {b.k}")
    counts = count_negative(b.matrix - a.matrix, tol)
    return ComparisonResult.from_counts(counts.negative, counts.indeterminate,
                                        int(d), counts.tol)


def identity_residual(mesh: Mesh, q1: CoefficientLike, q2: CoefficientLike,
                      k: float, basis: BoundaryBasis, g: np.ndarray) -> float:
    """Relative residual of the exact quadratic energy identity for one flux.

    For the flux with basis coefficients ``g`` and solutions ``u1, u2`` of the
    two configurations, the Galerkin discretization satisfies

        g.(Lambda2 - Lambda1) g  +  k^2 integral( (q1 - q2) u1^2 )
            =  integral( |grad(u2 - u1)|^2 - k^2 q2 (u2 - u1)^2 )

    exactly; the returned value is the defect of that equality relative to
    the magnitudes of its three terms (zero when all terms vanish).
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (basis.dim,):
        raise InvalidParameterError(f"flux coefficients must have shape ({basis.dim},)")
    sys1 = HelmholtzSystem(mesh, q1, k)
    sys2 = HelmholtzSystem(mesh, q2, k)
    load = basis_load_matrix(mesh, basis) @ g
    u1 = sys1.solve(load)
    u2 = sys2.solve(load)
    boundary_term = load @ (u2 - u1)
    interior_term = (k * k) * (u1 @ ((sys1.weighted_mass - sys2.weighted_mass) @ u1))
    w = u2 - u1
    energy_term = w @ (sys2.matrix @ w)
    scale = abs(boundary_term) + abs(interior_term) + abs(energy_term)
    if scale == 0.0:
        return 0.0
    return abs(boundary_term + interior_term - energy_term) / scale


def monotonicity_check(mesh: Mesh, q1: CoefficientLike, q2: CoefficientLike,
                       k: float, basis: BoundaryBasis,
                       tol: Optional[float] = None) -> ComparisonResult:
    """Verify ``Lambda(q1) <=_d Lambda(q2)`` with the defect predicted for ``q2``.

    Requires ``q1 <= q2`` triangle by triangle; the allowance is
    ``d_of_q(q2)``.  On a faithful discretization the verdict is True.
    """
    from .ntd import ntd_matrix

    q1 = as_coefficient(mesh, q1)
    q2 = as_coefficient(mesh, q2)
    if not (q1.values <= q2.values).all():
        raise InvalidParameterError("coefficients are not ordered: q1 <= q2 fails")
    d2 = d_of_q(mesh, q2, k)
    lam1 = ntd_matrix(mesh, q1, k, basis, label="ntd_q1")
    lam2 = ntd_matrix(mesh, q2, k, basis, label="ntd_q2")
    return leq_d(lam1, lam2, d2, tol)


def inclusion_test(lam_q: SymOp, lam_1: SymOp, tb: SymOp, alpha: float,
                   d_max: int, tol: Optional[float] = None) -> ComparisonResult:
    """Test ``alpha T_B <=_d  lam_q - lam_1`` for one probing region.

    The verdict is the pixel acceptance criterion of the reconstruction:
    counts the negative eigenvalues of ``lam_q - lam_1 - alpha T_B``.
    """
    if not (alpha > 0.0 and np.isfinite(alpha)):
        raise InvalidParameterError(f"alpha must be positive and finite, got {alpha!r}")
    if not isinstance(d_max, (int, np.integer)) or d_max < 0:
        raise InvalidParameterError("defect allowance must be a nonnegative integer")
    if not (lam_q.basis_id == lam_1.basis_id == tb.basis_id):
        raise BasisMismatchError("inclusion test requires operators on one basis")
    if not (lam_q.k == lam_1.k == tb.k):
        raise BasisMismatchError("inclusion test requires operators at one wavenumber")
    diff = lam_q.matrix - lam_1.matrix - float(alpha) * tb.matrix
    counts = count_negative(diff, tol)
    return ComparisonResult.from_counts(counts.negative, counts.indeterminate,
                                        int(d_max), counts.tol)


@dataclass(frozen=True)
class ReconstructionResult:
    """Pixelwise verdicts of a reconstruction run.

    ``mask[i]`` is True where the pixel passed (accepted as part of the
    scatterer); indeterminate counts are carried separately so ambiguous
    pixels can be rendered as such.  ``params`` records the run parameters
    (k, alpha, d_max, basis_dim, tol, contrast); ``sweep`` lists the
    ``(alpha, accepted_count)`` history when the contrast-step sweep ran.
    """

    grid: PixelGrid
    mask: np.ndarray
    negative_counts: np.ndarray
    indeterminate_counts: np.ndarray
    params: dict
    sweep: Optional[list] = field(default=None)

    def __post_init__(self):
        self.mask.setflags(write=False)
        self.negative_counts.setflags(write=False)
        self.indeterminate_counts.setflags(write=False)

    @property
    def ambiguous(self) -> np.ndarray:
        """Pixels whose verdict the near-threshold eigenvalues could flip.

        An indeterminate eigenvalue sits within half a tolerance of the count
        threshold, so it may or may not belong to the negative count.  The
        verdict is only uncertain when resolving all of them one way or the
        other crosses ``d_max``; a pixel rejected by a wide margin stays
        rejected no matter how they fall.
        """
        d_max = self.params["d_max"]
        neg, ind = self.negative_counts, self.indeterminate_counts
        certain_accept = neg + ind <= d_max
        certain_reject = neg - ind > d_max
        return ~(certain_accept | certain_reject)

    def pixel_values(self) -> np.ndarray:
        """Image values per pixel: 255 accepted, 0 rejected, 128 ambiguous."""
        vals = np.where(self.mask, 255, 0)
        return np.where(self.ambiguous, 128, vals).astype(int)


def _pixel_counts(diff: np.ndarray, tbs: list, alpha: float, d_max: int,
                  tol: Optional[float], threads: int):
    def one(tb_matrix_):
        return count_negative(diff - alpha * tb_matrix_, tol)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(one, tbs))
    else:
        counts = [one(tb) for tb in tbs]
    negative = np.array([c.negative for c in counts], dtype=int)
    indeterminate = np.array([c.indeterminate for c in counts], dtype=int)
    tols = np.array([c.tol for c in counts])
    mask = negative <= d_max
    return negative, indeterminate, mask, float(tols.max())


def reconstruct(mesh: Mesh, q_true: CoefficientLike, k: float,
                basis: BoundaryBasis, grid: PixelGrid,
                contrast: str = "positive", alpha: Optional[float] = None,
                tol: Optional[float] = None, threads: int = 1) -> ReconstructionResult:
    """Reconstruct the scatterer support pixel by pixel.

    For every pixel ``B`` of the grid the inclusion test compares
    ``alpha T_B`` against the measured operator gap:

    * ``contrast="positive"`` (``q >= 1``, strictly above 1 on the scatterer):
      gap ``Lambda(q) - Lambda(1)``, allowance ``d_of_q(max q)``, and alpha
      defaults to ``min(q restricted to the scatterer) - 1``.
    * ``contrast="negative"`` (``q <= 1``): gap ``Lambda(1) - Lambda(q)``,
      allowance ``d_of_q(1)``.  No usable alpha is computable from the data;
      with ``alpha=None`` the dyadic sweep ``alpha = 2^-m`` runs until the
      accepted set is nonempty and stable across two consecutive steps (the
      larger alpha of the first such pair is reported).  If no stable pair
      appears within the cap the smallest alpha's result is returned.

    Returns per-pixel verdicts plus the parameters that produced them.
    """
    q = as_coefficient(mesh, q_true)
    if contrast not in ("positive", "negative"):
        raise InvalidParameterError(f"contrast must be positive or negative, got {contrast!r}")
    if contrast == "positive":
        if q.min < 1.0:
            raise InvalidParameterError(
                f"positive contrast requires q >= 1 everywhere (min is {q.min:.17g})"
            )
        d_max = d_of_q(mesh, q.max, k)
        if alpha is None:
            above = q.values[q.values > 1.0]
            if above.size == 0:
                raise InvalidParameterError(
                    "no triangle has q > 1; give alpha explicitly for a no-scatterer run"
                )
            alpha = float(above.min() - 1.0)
    else:
        if q.max > 1.0:
            raise InvalidParameterError(
                f"negative contrast requires q <= 1 everywhere (max is {q.max:.17g})"
            )
        d_max = d_of_q(mesh, 1.0, k)

    sys1 = HelmholtzSystem(mesh, 1.0, k)
    loads = basis_load_matrix(mesh, basis)
    u1 = sys1.solve_many(loads)
    lam1 = make_symop(loads.T @ u1, basis.basis_id, "ntd_background", k)
    sys_q = HelmholtzSystem(mesh, q, k)
    uq = sys_q.solve_many(loads)
    lam_q = make_symop(loads.T @ uq, basis.basis_id, "ntd_measured", k)
    if contrast == "positive":
        diff = lam_q.matrix - lam1.matrix
    else:
        diff = lam1.matrix - lam_q.matrix
    tbs = [tb_from_solutions(mesh, region, k, basis, u1).matrix
           for region in grid.regions]

    sweep_history = None
    if alpha is not None:
        negative, indeterminate, mask, tol_used = _pixel_counts(
            diff, tbs, float(alpha), d_max, tol, threads
        )
        alpha_used = float(alpha)
    else:
        sweep_history = []
        outcomes = []
        chosen = None
        for m in range(_SWEEP_CAP + 1):
            a = 2.0 ** (-m)
            outcome = _pixel_counts(diff, tbs, a, d_max, tol, threads)
            outcomes.append((a, outcome))
            sweep_history.append((a, int(outcome[2].sum())))
            if m >= 1:
                prev_mask = outcomes[m - 1][1][2]
                if prev_mask.any() and np.array_equal(prev_mask, outcome[2]):
                    chosen = m - 1
                    break
        if chosen is None:
            chosen = len(outcomes) - 1
        alpha_used, (negative, indeterminate, mask, tol_used) = outcomes[chosen]

    params = {
        "k": float(k),
        "alpha": alpha_used,
        "d_max": int(d_max),
        "basis_dim": basis.dim,
        "tol": tol_used,
        "contrast": contrast,
    }
    return ReconstructionResult(
        grid=grid,
        mask=mask,
        negative_counts=negative,
        indeterminate_counts=indeterminate,
        params=params,
        sweep=sweep_history,
    )
