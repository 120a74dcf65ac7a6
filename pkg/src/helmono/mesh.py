"""Conforming P1 triangle meshes of the unit square and triangle-set regions.

The mesh generator produces the structured criss-cross triangulation: an
``n x n`` grid of square cells, each split into two triangles along the
south-west to north-east diagonal.  Boundary edges are stored in
counter-clockwise loop order starting at the origin, so the arc-length
parameterization of the boundary is just a cumulative sum of edge lengths.

A subset of the boundary (the instrumented part, where fluxes are applied and
traces are read) is tracked per edge through ``sigma_flags``; regions (scatterer
supports, probe boxes, reconstruction pixels) are plain boolean masks over
triangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameterError

_SIDE_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Immutable conforming triangle mesh.

    Parameters
    ----------
    vertices : ndarray, shape (nv, 2)
        Vertex coordinates.
    triangles : ndarray, shape (nt, 3)
        Vertex indices per triangle, counter-clockwise.
    boundary_edges : ndarray, shape (nb, 2)
        Vertex index pairs of boundary edges, oriented so the domain lies on
        the left, listed in loop order.
    sigma_flags : ndarray, shape (nb,)
        True on edges belonging to the instrumented boundary part.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    sigma_flags: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "sigma_flags"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidParameterError("vertices must have shape (nv, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise InvalidParameterError("triangles must have shape (nt, 3)")
        if self.boundary_edges.ndim != 2 or self.boundary_edges.shape[1] != 2:
            raise InvalidParameterError("boundary_edges must have shape (nb, 2)")
        if self.sigma_flags.shape != (self.boundary_edges.shape[0],):
            raise InvalidParameterError("sigma_flags length must match boundary_edges")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        """Signed areas, positive for counter-clockwise triangles."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def triangle_barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def boundary_edge_lengths(self) -> np.ndarray:
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return np.hypot(*(b - a).T)


@dataclass(frozen=True)
class Region:
    """A set of triangles, stored as a boolean mask over the mesh."""

    triangle_flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.triangle_flags, dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "triangle_flags", flags)

    @property
    def n_selected(self) -> int:
        return int(self.triangle_flags.sum())

    @property
    def is_empty(self) -> bool:
        return not self.triangle_flags.any()

    def union(self, other: "Region") -> "Region":
        return Region(self.triangle_flags | other.triangle_flags)

    def intersect(self, other: "Region") -> "Region":
        return Region(self.triangle_flags & other.triangle_flags)

    def minus(self, other: "Region") -> "Region":
        return Region(self.triangle_flags & ~other.triangle_flags)

    def area(self, mesh: Mesh) -> float:
        return float(mesh.triangle_areas()[self.triangle_flags].sum())


def build_unit_square_mesh(n: int) -> Mesh:
    """Triangulate the unit square into ``2 n^2`` criss-cross triangles.

    Vertices sit on the uniform ``(n+1) x (n+1)`` grid; vertex ``(i, j)`` has
    index ``j * (n + 1) + i`` and coordinates ``(i/n, j/n)``.  Each cell is
    split along its south-west to north-east diagonal into two
    counter-clockwise triangles.

    Parameters
    ----------
    n : int
        Number of cells per side, at least 1.

    Returns
    -------
    Mesh
        Mesh with ``(n+1)^2`` vertices, ``2 n^2`` triangles and ``4 n``
        boundary edges in counter-clockwise loop order starting at the origin;
        all sigma flags start False.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    side = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(side, side)  # row index = j (y), column index = i (x)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = vid(ii, jj)
    v10 = vid(ii + 1, jj)
    v01 = vid(ii, jj + 1)
    v11 = vid(ii + 1, jj + 1)
    lower = np.column_stack([v00, v10, v11])  # below the diagonal
    upper = np.column_stack([v00, v11, v01])  # above the diagonal
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    right = np.column_stack([vid(n, k), vid(n, k + 1)])
    top = np.column_stack([vid(n - k, n), vid(n - k - 1, n)])
    left = np.column_stack([vid(0, n - k), vid(0, n - k - 1)])
    boundary_edges = np.vstack([bottom, right, top, left]).astype(np.int64)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        sigma_flags=np.zeros(boundary_edges.shape[0], dtype=bool),
    )


def _side_predicate(name: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    name = name.strip().lower()
    if name == "all":
        return lambda mx, my: np.ones_like(mx, dtype=bool)
    if name == "bottom":
        return lambda mx, my: np.abs(my) <= _SIDE_TOL
    if name == "top":
        return lambda mx, my: np.abs(my - 1.0) <= _SIDE_TOL
    if name == "left":
        return lambda mx, my: np.abs(mx) <= _SIDE_TOL
    if name == "right":
        return lambda mx, my: np.abs(mx - 1.0) <= _SIDE_TOL
    raise InvalidParameterError(
        f"unknown boundary selector {name!r}; expected all/bottom/top/left/right"
    )


def mark_sigma(mesh: Mesh, selector) -> Mesh:
    """Flag boundary edges as part of the instrumented boundary.

    ``selector`` is either a callable taking edge-midpoint coordinate arrays
    ``(mx, my)`` and returning a boolean mask, or a string naming sides of the
    unit square: one of ``all``, ``bottom``, ``top``, ``left``, ``right``, or
    several of those joined by ``+`` or whitespace (their union).  Matching is
    by edge midpoint.  Flags accumulate: edges already flagged stay flagged, so
    repeated calls with different selectors take unions and repeating the same
    selector is a no-op.

    Returns a new mesh; the input is unchanged.
    """
    mids = 0.5 * (
        mesh.vertices[mesh.boundary_edges[:, 0]] + mesh.vertices[mesh.boundary_edges[:, 1]]
    )
    if callable(selector):
        matched = np.asarray(selector(mids[:, 0], mids[:, 1]), dtype=bool)
        if matched.shape != (mesh.boundary_edges.shape[0],):
            raise InvalidParameterError("selector must return one flag per boundary edge")
    elif isinstance(selector, str):
        parts = [p for p in selector.replace("+", " ").split() if p]
        if not parts:
            raise InvalidParameterError("empty boundary selector")
        matched = np.zeros(mesh.boundary_edges.shape[0], dtype=bool)
        for part in parts:
            matched |= _side_predicate(part)(mids[:, 0], mids[:, 1])
    else:
        raise InvalidParameterError("selector must be a callable or a string")
    if not matched.any():
        raise InvalidParameterError("selector matched no boundary edge")
    return Mesh(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        boundary_edges=mesh.boundary_edges,
        sigma_flags=mesh.sigma_flags | matched,
    )


def rect_region(mesh: Mesh, box: Sequence[float]) -> Region:
    """Select the triangles whose barycenter lies in the closed box.

    Parameters
    ----------
    box : (x0, y0, x1, y1)
        Axis-aligned rectangle, corners included.

    Raises
    ------
    InvalidParameterError
        If the box is degenerate or selects no triangle.
    """
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (x0 < x1 and y0 < y1):
        raise InvalidParameterError(f"degenerate box {box!r}")
    bary = mesh.triangle_barycenters()
    flags = (bary[:, 0] >= x0) & (bary[:, 0] <= x1) & (bary[:, 1] >= y0) & (bary[:, 1] <= y1)
    if not flags.any():
        raise InvalidParameterError(f"box {box!r} selects no triangle")
    return Region(flags)


def full_region(mesh: Mesh) -> Region:
    return Region(np.ones(mesh.n_triangles, dtype=bool))


def empty_region(mesh: Mesh) -> Region:
    return Region(np.zeros(mesh.n_triangles, dtype=bool))


@dataclass(frozen=True)
class PixelGrid:
    """Rectangular reconstruction grid: boxes plus the triangles inside each."""

    nx: int
    ny: int
    boxes: np.ndarray  # (nx*ny, 4), rows (x0, y0, x1, y1), x fastest
    regions: list = field(repr=False, default_factory=list)

    def index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix


def pixel_grid(mesh: Mesh, nx: int, ny: int) -> PixelGrid:
    """Partition the unit square into ``nx x ny`` pixels of triangles.

    Each triangle is assigned to exactly one pixel by its barycenter (the
    boxes tile the square half-open, so nothing is double counted).  Raises if
    any pixel ends up empty, which happens when the grid is finer than the
    mesh.
    """
    if nx < 1 or ny < 1:
        raise InvalidParameterError("pixel grid must be at least 1 x 1")
    bary = mesh.triangle_barycenters()
    ix = np.clip(np.floor(bary[:, 0] * nx).astype(int), 0, nx - 1)
    iy = np.clip(np.floor(bary[:, 1] * ny).astype(int), 0, ny - 1)
    pix = iy * nx + ix
    boxes = np.empty((nx * ny, 4))
    regions = []
    for j in range(ny):
        for i in range(nx):
            p = j * nx + i
            boxes[p] = (i / nx, j / ny, (i + 1) / nx, (j + 1) / ny)
            flags = pix == p
            if not flags.any():
                raise InvalidParameterError(
                    f"pixel ({i}, {j}) contains no triangle; grid finer than mesh"
                )
            regions.append(Region(flags))
    return PixelGrid(nx=nx, ny=ny, boxes=boxes, regions=regions)


def validate_mesh(mesh: Mesh) -> None:
    """Check the structural invariants; raises InvalidParameterError on failure.

    Verified: positive triangle areas, every interior edge shared by exactly
    two triangles and every boundary edge by exactly one, boundary edges
    forming closed loops with the domain on the left, and edge-connectivity of
    the triangulation.
    """
    areas = mesh.triangle_areas()
    if not (areas > 0).all():
        raise InvalidParameterError("triangle with non-positive signed area")

    edge_count: dict = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    if not all(c in (1, 2) for c in edge_count.values()):
        raise InvalidParameterError("edge shared by more than two triangles")
    boundary_keys = {(min(a, b), max(a, b)) for a, b in mesh.boundary_edges}
    actual_boundary = {k for k, c in edge_count.items() if c == 1}
    if boundary_keys != actual_boundary:
        raise InvalidParameterError("boundary edge list does not match mesh topology")

    # Domain-on-the-left orientation: each boundary edge (a, b) must occur with
    # that orientation in its owning triangle's counter-clockwise cycle.
    oriented = set()
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            oriented.add((a, b))
    for a, b in mesh.boundary_edges:
        if (a, b) not in oriented:
            raise InvalidParameterError(f"boundary edge ({a}, {b}) has the domain on its right")

    # Loop order: consecutive boundary edges chain head to tail.
    heads = mesh.boundary_edges[:, 0]
    tails = mesh.boundary_edges[:, 1]
    if not (np.roll(heads, -1) == tails).all():
        raise InvalidParameterError("boundary edges are not in loop order")

    # Edge-connectivity via triangle adjacency.
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    tri = mesh.triangles
    rows = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    cols = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    adj = coo_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise InvalidParameterError(f"mesh has {n_comp} connected components")


def structured_n(mesh: Mesh) -> int:
    """Recover the per-side cell count of a structured unit-square mesh."""
    n = int(round(np.sqrt(mesh.n_vertices))) - 1
    if (n + 1) ** 2 != mesh.n_vertices or mesh.n_triangles != 2 * n * n:
        raise InvalidParameterError("mesh is not a structured unit-square mesh")
    return n


def eval_p1_structured(mesh: Mesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate a nodal P1 field of a structured unit-square mesh at points.

    Points must lie in the closed unit square.  Used to compare solutions
    across refinement levels.
    """
    n = structured_n(mesh)
    pts = np.asarray(points, dtype=float)
    x = np.clip(pts[:, 0], 0.0, 1.0)
    y = np.clip(pts[:, 1], 0.0, 1.0)
    i = np.minimum((x * n).astype(int), n - 1)
    j = np.minimum((y * n).astype(int), n - 1)
    xl = x * n - i  # local coordinates in [0, 1]
    yl = y * n - j

    def vid(ii, jj):
        return jj * (n + 1) + ii

    u = np.asarray(u, dtype=float)
    u00 = u[vid(i, j)]
    u10 = u[vid(i + 1, j)]
    u01 = u[vid(i, j + 1)]
    u11 = u[vid(i + 1, j + 1)]
    # Lower triangle (xl >= yl): u00 + (u10-u00) xl + (u11-u10) yl
    lower = u00 + (u10 - u00) * xl + (u11 - u10) * yl
    # Upper triangle (xl < yl): u00 + (u11-u01) xl + (u01-u00) yl
    upper = u00 + (u11 - u01) * xl + (u01 - u00) * yl
    return np.where(xl >= yl, lower, upper)


def mesh_to_text(mesh: Mesh) -> str:
    """Serialize the mesh as plain text, one record per line.

    Record kinds: ``vertex x y``, ``triangle i j k`` and ``edge a b s`` where
    ``s`` is 1 on instrumented boundary edges and 0 elsewhere.  Coordinates
    use 17 significant digits so the round trip is exact.
    """
    lines = [f"# helmono mesh: {mesh.n_vertices} vertices, "
             f"{mesh.n_triangles} triangles, {mesh.boundary_edges.shape[0]} boundary edges"]
    for x, y in mesh.vertices:
        lines.append(f"vertex {x:.17g} {y:.17g}")
    for a, b, c in mesh.triangles:
        lines.append(f"triangle {a} {b} {c}")
    for (a, b), s in zip(mesh.boundary_edges, mesh.sigma_flags):
        lines.append(f"edge {a} {b} {1 if s else 0}")
    return "\n".join(lines) + "\n"
