"""Command-line driver for mesh, spectra, operators and reconstructions.

Every subcommand reads one flat key-value configuration file (``key = value``
per line, ``#`` comments), writes its artifacts into an output directory and
leaves a run manifest there.  Domain failures map to distinct exit codes:

* 2 -- configuration problems (unknown keys, missing values, bad types)
* 3 -- resonant configuration (the forward operator is singular)
* 4 -- ambiguous eigenvalue count at the requested tolerance
* 5 -- violated precondition of a library operation

Outputs are deterministic: rerunning a subcommand with the same configuration
and seed reproduces every artifact byte for byte (manifest timing lines aside).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HelmonoError, InvalidParameterError
from .fem import Coefficient, HelmholtzSystem
from .io import (
    fmt,
    parse_config_text,
    write_eigs_csv,
    write_manifest,
    write_mesh_text,
    write_pgm,
    write_sparse_csv,
    write_symop_csv,
    write_table_csv,
    write_vector_csv,
)
from .mesh import build_unit_square_mesh, empty_region, mark_sigma, pixel_grid, rect_region
from .monotone import identity_residual, inclusion_test, monotonicity_check, reconstruct
from .ntd import (
    basis_edge_values,
    basis_load_matrix,
    basis_solutions,
    boundary_basis,
    gram_from_solutions,
    localized_potential,
    ntd_matrix,
    project_onto_basis,
)
from .spectral import (
    count_K_eigs_above_one,
    d_of_q,
    nearest_neumann_eigenvalue,
    neumann_eigenvalues,
)

_REQUIRED = object()


class Config:
    """Typed access to parsed configuration entries with line-precise errors."""

    def __init__(self, entries: dict):
        self._entries = entries

    def keys(self):
        return list(self._entries)

    def pairs(self):
        return [(k, v) for k, (v, _) in self._entries.items()]

    def has(self, key: str) -> bool:
        return key in self._entries

    def _fetch(self, key: str, default):
        if key in self._entries:
            return self._entries[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'")
        return None

    def get_str(self, key: str, default=_REQUIRED, choices=None):
        entry = self._fetch(key, default)
        if entry is None:
            value = default
        else:
            value = entry[0]
        if value is not None and choices is not None and value not in choices:
            where = f"line {entry[1]}: " if entry else ""
            raise ConfigError(
                f"{where}key '{key}': expected one of {sorted(choices)}, got {value!r}"
            )
        return value

    def get_float(self, key: str, default=_REQUIRED):
        entry = self._fetch(key, default)
        if entry is None:
            return default
        value, lineno = entry
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key '{key}': not a number: {value!r}") from exc

    def get_int(self, key: str, default=_REQUIRED):
        entry = self._fetch(key, default)
        if entry is None:
            return default
        value, lineno = entry
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key '{key}': not an integer: {value!r}") from exc

    def get_floats(self, key: str, count=None, default=_REQUIRED):
        entry = self._fetch(key, default)
        if entry is None:
            return default
        value, lineno = entry
        try:
            vals = [float(v) for v in value.split()]
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: key '{key}': expected numbers, got {value!r}"
            ) from exc
        if count is not None and len(vals) != count:
            raise ConfigError(
                f"line {lineno}: key '{key}': expected {count} numbers, got {len(vals)}"
            )
        return vals

    def get_ints(self, key: str, default=_REQUIRED):
        entry = self._fetch(key, default)
        if entry is None:
            return default
        value, lineno = entry
        try:
            return [int(v) for v in value.split()]
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: key '{key}': expected integers, got {value!r}"
            ) from exc

    def lineno(self, key: str) -> int:
        return self._entries[key][1]

    def check_known(self, exact: set, prefixes: tuple = ()) -> None:
        for key, (_, lineno) in self._entries.items():
            if key in exact:
                continue
            if any(key.startswith(p) for p in prefixes):
                continue
            raise ConfigError(f"line {lineno}: unknown key '{key}' for this subcommand")


_BASE_KEYS = {"mesh.domain", "mesh.n", "sigma.selector", "output.dir", "seed", "k",
              "tol.count", "basis.segments"}
_COEFF_PREFIXES = ("coefficient.", "coefficient2.")


def _load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return Config(parse_config_text(text))


def _build_mesh(cfg: Config):
    domain = cfg.get_str("mesh.domain", "unit_square", choices={"unit_square"})
    n = cfg.get_int("mesh.n")
    if n < 1:
        raise ConfigError(f"line {cfg.lineno('mesh.n')}: mesh.n must be at least 1")
    mesh = build_unit_square_mesh(n)
    selector = cfg.get_str("sigma.selector", "all")
    try:
        return mark_sigma(mesh, selector)
    except InvalidParameterError as exc:
        lineno = cfg.lineno("sigma.selector") if cfg.has("sigma.selector") else "?"
        raise ConfigError(f"line {lineno}: sigma.selector: {exc}") from exc


def _inclusion_keys(cfg: Config, prefix: str):
    bare = f"{prefix}.inclusion"
    found = []
    for key in cfg.keys():
        if key == bare:
            found.append((-1, key))
        elif key.startswith(bare + "."):
            suffix = key[len(bare) + 1:]
            try:
                found.append((int(suffix), key))
            except ValueError:
                raise ConfigError(
                    f"line {cfg.lineno(key)}: key '{key}': inclusion index must be an integer"
                ) from None
    return [key for _, key in sorted(found)]


def _build_coefficient(cfg: Config, mesh, prefix: str = "coefficient") -> Coefficient:
    background = cfg.get_float(f"{prefix}.background", 1.0)
    coeff = Coefficient.constant(mesh, background)
    for key in _inclusion_keys(cfg, prefix):
        vals = cfg.get_floats(key, count=5)
        box, value = vals[:4], vals[4]
        try:
            region = rect_region(mesh, box)
        except InvalidParameterError as exc:
            raise ConfigError(f"line {cfg.lineno(key)}: key '{key}': {exc}") from exc
        coeff = coeff.with_region(region, value)
    return coeff


def _build_basis(cfg: Config, mesh):
    segments = cfg.get_int("basis.segments", None)
    return boundary_basis(mesh, segments)


def _wavenumber(cfg: Config) -> float:
    k = cfg.get_float("k")
    if not (k > 0.0):
        raise ConfigError(f"line {cfg.lineno('k')}: k must be positive")
    return k


def _count_tol(cfg: Config):
    tol = cfg.get_float("tol.count", None)
    if tol is not None and tol <= 0.0:
        raise ConfigError(f"line {cfg.lineno('tol.count')}: tol.count must be positive")
    return tol


def _out_dir(cfg: Config, args) -> Path:
    out = args.out or cfg.get_str("output.dir", None)
    if out is None:
        raise ConfigError("no output directory: set output.dir or pass --out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _note(path: Path) -> None:
    print(f"wrote {path}")


def cmd_mesh(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS)
    mesh = _build_mesh(cfg)
    write_mesh_text(outdir / "mesh.txt", mesh)
    _note(outdir / "mesh.txt")


def cmd_eigs(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS | {"eigs.count"}, _COEFF_PREFIXES)
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k = _wavenumber(cfg)
    count = cfg.get_int("eigs.count", 5)
    result = neumann_eigenvalues(mesh, q, k, count)
    write_eigs_csv(outdir / "eigs.csv", result.values)
    _note(outdir / "eigs.csv")


def cmd_dq(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS, _COEFF_PREFIXES)
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k = _wavenumber(cfg)
    tol = _count_tol(cfg)
    d = d_of_q(mesh, q, k, tol)
    via_k = count_K_eigs_above_one(mesh, q, k, tol)
    text = (
        f"d_of_q = {d}\n"
        f"count_K_eigs_above_one = {via_k}\n"
        f"agree = {'true' if d == via_k else 'false'}\n"
    )
    (outdir / "dq.txt").write_text(text)
    print(text, end="")
    _note(outdir / "dq.txt")


def cmd_resonance_scan(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(
        (_BASE_KEYS - {"k"}) | {"scan.k_min", "scan.k_max", "scan.steps"},
        _COEFF_PREFIXES,
    )
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k_min = cfg.get_float("scan.k_min")
    k_max = cfg.get_float("scan.k_max")
    steps = cfg.get_int("scan.steps")
    if not (0.0 < k_min < k_max):
        raise ConfigError("scan range must satisfy 0 < scan.k_min < scan.k_max")
    if steps < 2:
        raise ConfigError("scan.steps must be at least 2")
    ks = np.linspace(k_min, k_max, steps)
    nearest = [nearest_neumann_eigenvalue(mesh, q, k) for k in ks]
    write_table_csv(outdir / "scan.csv", ["k", "lambda_nearest_zero"],
                    zip(ks, nearest))
    brackets = []
    for i in range(len(ks) - 1):
        if np.sign(nearest[i]) * np.sign(nearest[i + 1]) < 0:
            brackets.append((ks[i], ks[i + 1]))
    write_table_csv(outdir / "brackets.csv", ["k_lo", "k_hi"], brackets)
    _note(outdir / "scan.csv")
    _note(outdir / "brackets.csv")
    print(f"{len(brackets)} resonance bracket(s) in [{fmt(k_min)}, {fmt(k_max)}]")


def cmd_ntd(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS, _COEFF_PREFIXES)
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k = _wavenumber(cfg)
    basis = _build_basis(cfg, mesh)
    op = ntd_matrix(mesh, q, k, basis)
    write_symop_csv(outdir / "ntd.csv", op)
    _note(outdir / "ntd.csv")
    if args.dump_matrices:
        system = HelmholtzSystem(mesh, q, k)
        write_sparse_csv(outdir / "system_matrix.csv", system.matrix)
        loads = basis_load_matrix(mesh, basis)
        write_sparse_csv(outdir / "load_matrix.csv", loads)
        _note(outdir / "system_matrix.csv")
        _note(outdir / "load_matrix.csv")


def cmd_identity_check(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS | {"g.mode"}, _COEFF_PREFIXES)
    mesh = _build_mesh(cfg)
    q1 = _build_coefficient(cfg, mesh, "coefficient")
    q2 = _build_coefficient(cfg, mesh, "coefficient2")
    k = _wavenumber(cfg)
    basis = _build_basis(cfg, mesh)
    mode = cfg.get_str("g.mode", "first", choices={"first", "random"})
    seed = cfg.get_int("seed", 0)
    if mode == "first":
        g = np.zeros(basis.dim)
        g[0] = 1.0
    else:
        g = np.random.default_rng(seed).standard_normal(basis.dim)
        g /= np.linalg.norm(g)
    residual = identity_residual(mesh, q1, q2, k, basis, g)
    text = f"g_mode = {mode}\nresidual = {fmt(residual)}\n"
    (outdir / "identity.txt").write_text(text)
    print(text, end="")
    _note(outdir / "identity.txt")


def cmd_monotonicity_check(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(_BASE_KEYS, _COEFF_PREFIXES)
    mesh = _build_mesh(cfg)
    q1 = _build_coefficient(cfg, mesh, "coefficient")
    q2 = _build_coefficient(cfg, mesh, "coefficient2")
    k = _wavenumber(cfg)
    basis = _build_basis(cfg, mesh)
    result = monotonicity_check(mesh, q1, q2, k, basis, _count_tol(cfg))
    text = (
        f"negative_count = {result.negative_count}\n"
        f"indeterminate_count = {result.indeterminate_count}\n"
        f"d_allowed = {result.d_allowed}\n"
        f"tol = {fmt(result.tol)}\n"
        f"verdict = {'true' if result.verdict else 'false'}\n"
    )
    (outdir / "comparison.txt").write_text(text)
    print(text, end="")
    _note(outdir / "comparison.txt")


def cmd_localize(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(
        _BASE_KEYS | {"localize.b_box", "localize.d_box", "localize.v_dim",
                      "localize.v_mode", "localize.segments"},
        _COEFF_PREFIXES,
    )
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k = _wavenumber(cfg)
    b_box = cfg.get_floats("localize.b_box", count=4)
    region_b = rect_region(mesh, b_box)
    if cfg.has("localize.d_box"):
        region_d = rect_region(mesh, cfg.get_floats("localize.d_box", count=4))
    else:
        region_d = empty_region(mesh)
    v_dim = cfg.get_int("localize.v_dim", 0)
    if v_dim < 0:
        raise ConfigError("localize.v_dim must be nonnegative")
    v_mode = cfg.get_str("localize.v_mode", "first", choices={"first", "random"})
    levels = cfg.get_ints("localize.segments", None)
    if levels is None:
        levels = [cfg.get_int("basis.segments", None)]

    rows = []
    final = None
    coarse_basis = None
    v_coarse = None
    for segments in levels:
        basis = boundary_basis(mesh, segments)
        if v_dim:
            if coarse_basis is None:
                coarse_basis = basis
                if v_mode == "first":
                    v_coarse = np.eye(basis.dim)[:, :v_dim]
                else:
                    seed = cfg.get_int("seed", 0)
                    sample = np.random.default_rng(seed).standard_normal(
                        (basis.dim, v_dim))
                    v_coarse = np.linalg.qr(sample)[0]
                v = v_coarse
            else:
                v = project_onto_basis(basis, basis_edge_values(coarse_basis, v_coarse))
        else:
            v = None
        result = localized_potential(mesh, q, k, basis, region_b, region_d, v)
        solutions = basis_solutions(mesh, q, k, basis)
        g_b = gram_from_solutions(mesh, region_b, basis, solutions, k=k).matrix
        g_d = gram_from_solutions(mesh, region_d, basis, solutions, k=k).matrix
        b_energy = float(result.g @ g_b @ result.g)
        d_energy = float(result.g @ g_d @ result.g)
        rows.append((basis.dim, result.ratio, b_energy, d_energy))
        final = result
    write_table_csv(outdir / "localize.csv",
                    ["dim", "ratio", "b_energy", "d_energy"], rows)
    write_vector_csv(outdir / "g.csv", final.g)
    _note(outdir / "localize.csv")
    _note(outdir / "g.csv")
    for dim, ratio, be, de in rows:
        print(f"dim {dim}: ratio {fmt(ratio)}, target energy {fmt(be)}, "
              f"avoided energy {fmt(de)}")


def cmd_reconstruct(cfg: Config, args, outdir: Path) -> None:
    cfg.check_known(
        _BASE_KEYS | {"grid.nx", "grid.ny", "contrast", "alpha.policy", "alpha.value"},
        _COEFF_PREFIXES,
    )
    mesh = _build_mesh(cfg)
    q = _build_coefficient(cfg, mesh)
    k = _wavenumber(cfg)
    basis = _build_basis(cfg, mesh)
    grid = pixel_grid(mesh, cfg.get_int("grid.nx"), cfg.get_int("grid.ny"))
    contrast = cfg.get_str("contrast", "positive", choices={"positive", "negative"})
    default_policy = "derive" if contrast == "positive" else "sweep"
    policy = cfg.get_str("alpha.policy", default_policy,
                         choices={"derive", "fixed", "sweep"})
    if policy == "fixed":
        alpha = cfg.get_float("alpha.value")
    elif policy == "derive":
        if contrast != "positive":
            raise ConfigError("alpha.policy = derive applies to positive contrast only")
        alpha = None
    else:
        if contrast != "negative":
            raise ConfigError("alpha.policy = sweep applies to negative contrast only")
        alpha = None

    result = reconstruct(mesh, q, k, basis, grid, contrast=contrast, alpha=alpha,
                         tol=_count_tol(cfg), threads=args.threads)

    rows = []
    for p in range(grid.nx * grid.ny):
        iy, ix = divmod(p, grid.nx)
        x0, y0, x1, y1 = grid.boxes[p]
        rows.append((p, ix, iy, x0, y0, x1, y1,
                     int(result.negative_counts[p]),
                     int(result.indeterminate_counts[p]),
                     bool(result.mask[p])))
    write_table_csv(
        outdir / "reconstruct.csv",
        ["pixel", "ix", "iy", "x0", "y0", "x1", "y1",
         "negative_count", "indeterminate_count", "accepted"],
        rows,
    )
    write_pgm(outdir / "mask.pgm", result.pixel_values().reshape(grid.ny, grid.nx))
    params = result.params
    text = "".join(
        f"{key} = {fmt(params[key]) if isinstance(params[key], float) else params[key]}\n"
        for key in ("k", "alpha", "d_max", "basis_dim", "tol", "contrast")
    )
    (outdir / "params.txt").write_text(text)
    if result.sweep is not None:
        write_table_csv(outdir / "sweep.csv", ["alpha", "accepted_count"], result.sweep)
        _note(outdir / "sweep.csv")
    _note(outdir / "reconstruct.csv")
    _note(outdir / "mask.pgm")
    _note(outdir / "params.txt")
    print(f"accepted {int(result.mask.sum())} of {grid.nx * grid.ny} pixels")


_COMMANDS = {
    "mesh": cmd_mesh,
    "eigs": cmd_eigs,
    "dq": cmd_dq,
    "resonance-scan": cmd_resonance_scan,
    "ntd": cmd_ntd,
    "identity-check": cmd_identity_check,
    "monotonicity-check": cmd_monotonicity_check,
    "localize": cmd_localize,
    "reconstruct": cmd_reconstruct,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helmono",
        description="Monotonicity-based scatterer detection for the 2D "
                    "Helmholtz Neumann problem.",
    )
    parser.add_argument("--version", action="version", version=f"helmono {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("config", help="path to the flat key-value configuration file")
        p.add_argument("--out", default=None,
                       help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap for parallel pixel tests "
                            "(default: HELM_MONO_THREADS or CPU count)")
        p.add_argument("--dump-matrices", action="store_true",
                       help="also dump system matrix and load vectors (debug)")
    return parser


def _resolve_threads(value) -> int:
    if value is None:
        env = os.environ.get("HELM_MONO_THREADS")
        if env is not None:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(
                    f"HELM_MONO_THREADS must be an integer, got {env!r}"
                ) from None
        else:
            value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError("thread cap must be at least 1")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        args.threads = _resolve_threads(args.threads)
        cfg = _load_config(args.config)
        outdir = _out_dir(cfg, args)
        _COMMANDS[args.command](cfg, args, outdir)
        seed = cfg.get_int("seed", 0)
        write_manifest(
            outdir / "manifest.txt",
            args.command,
            cfg.pairs(),
            seed,
            [("total", time.perf_counter() - started)],
        )
    except HelmonoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
