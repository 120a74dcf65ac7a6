"""Deterministic plain-text serialization of every artifact the package emits.

All floats are written with 17 significant digits (lossless round trip for
doubles), all files end with a newline and use LF line endings, and nothing
here depends on locale, time or iteration-order accidents, so identical
inputs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InvalidParameterError
from .mesh import Mesh, mesh_to_text
from .ntd import BoundaryBasis, SymOp, make_symop


def fmt(x) -> str:
    """17-significant-digit decimal rendering of a float."""
    return f"{float(x):.17g}"


def _write(path, text: str) -> None:
    with Path(path).open("w", newline="\n") as handle:
        handle.write(text)


def write_mesh_text(path, mesh: Mesh) -> None:
    _write(path, mesh_to_text(mesh))


def write_eigs_csv(path, values: Sequence[float]) -> None:
    lines = ["index,value"]
    for i, v in enumerate(values):
        lines.append(f"{i},{fmt(v)}")
    _write(path, "\n".join(lines) + "\n")


def write_vector_csv(path, vec: Sequence[float]) -> None:
    lines = ["index,value"]
    for i, v in enumerate(vec):
        lines.append(f"{i},{fmt(v)}")
    _write(path, "\n".join(lines) + "\n")


def write_sparse_csv(path, matrix) -> None:
    """Triplet dump (row, col, value) of a sparse matrix, row-major order."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = ["row,col,value"]
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        lines.append(f"{r},{c},{fmt(v)}")
    _write(path, "\n".join(lines) + "\n")


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Generic CSV writer; floats get the 17-digit treatment, the rest str()."""
    def cell(v) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return fmt(v)
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(v) for v in row))
    _write(path, "\n".join(lines) + "\n")


def write_symop_csv(path, op: SymOp) -> None:
    """Dense operator dump: one header line (label, k, dim), then the rows."""
    lines = [f"{op.label},{fmt(op.k)},{op.dim}"]
    for row in op.matrix:
        lines.append(",".join(fmt(v) for v in row))
    _write(path, "\n".join(lines) + "\n")


def read_symop_csv(path, basis: Optional[BoundaryBasis] = None) -> SymOp:
    """Read an operator dump back.

    Pass the basis the file was produced on to restore comparability (the
    file itself only records the dimension); operators loaded without a basis
    get a file-derived id and can only be compared with operators loaded the
    same way.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidParameterError(f"{path}: empty operator file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise InvalidParameterError(f"{path}: malformed header {lines[0]!r}")
    label, k_str, dim_str = head
    try:
        k = float(k_str)
        dim = int(dim_str)
    except ValueError as exc:
        raise InvalidParameterError(f"{path}: malformed header {lines[0]!r}") from exc
    if len(lines) - 1 != dim:
        raise InvalidParameterError(
            f"{path}: header says dim {dim} but file has {len(lines) - 1} rows"
        )
    try:
        matrix = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise InvalidParameterError(f"{path}: malformed matrix row") from exc
    if matrix.shape != (dim, dim):
        raise InvalidParameterError(f"{path}: matrix is not {dim} x {dim}")
    if basis is not None:
        if basis.dim != dim:
            raise InvalidParameterError(
                f"{path}: file dimension {dim} does not match basis dimension {basis.dim}"
            )
        basis_id = basis.basis_id
    else:
        basis_id = f"file:{label}:k{fmt(k)}:dim{dim}"
    return make_symop(matrix, basis_id, label, k)


def write_pgm(path, values: np.ndarray) -> None:
    """ASCII PGM (P2) image of per-pixel values in [0, 255].

    ``values[iy, ix]`` uses mathematical orientation (iy = 0 at the bottom);
    rows are emitted top-first as the format requires.
    """
    vals = np.asarray(values, dtype=int)
    if vals.ndim != 2:
        raise InvalidParameterError("image values must be 2-D")
    if vals.min() < 0 or vals.max() > 255:
        raise InvalidParameterError("image values must lie in [0, 255]")
    ny, nx = vals.shape
    lines = ["P2", f"{nx} {ny}", "255"]
    for iy in range(ny - 1, -1, -1):
        lines.append(" ".join(str(v) for v in vals[iy]))
    _write(path, "\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2 image back into mathematical orientation."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise InvalidParameterError(f"{path}: not an ASCII PGM file")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(t) for t in tokens[4:]], dtype=int)
    if data.size != nx * ny or maxval != 255:
        raise InvalidParameterError(f"{path}: malformed PGM payload")
    return data.reshape(ny, nx)[::-1]


def write_manifest(path, command: str, config_pairs: Sequence[tuple],
                   seed: int, timings: Sequence[tuple]) -> None:
    """Run manifest: config echo, library versions, seed and wall times.

    Timing lines carry the ``time.`` prefix so reproducibility checks can
    strip them; everything else is deterministic.
    """
    import scipy

    from . import __version__

    lines = [
        "# helmono run manifest",
        f"command = {command}",
        f"helmono = {__version__}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"seed = {seed}",
    ]
    for key, value in config_pairs:
        lines.append(f"config.{key} = {value}")
    for name, seconds in timings:
        lines.append(f"time.{name} = {seconds:.3f}")
    _write(path, "\n".join(lines) + "\n")


def parse_config_text(text: str):
    """Parse the flat key-value run configuration format.

    One ``key = value`` assignment per line; blank lines and ``#`` comments
    are skipped.  Keys are dotted lowercase words; duplicate keys are an
    error.  Returns an ordered mapping key -> (value, line number).
    """
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first set on line {entries[key][1]})"
            )
        entries[key] = (value, lineno)
    return entries
