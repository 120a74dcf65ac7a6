import numpy as np
import pytest

from helmono import boundary_basis, build_unit_square_mesh, leq_d, make_symop, mark_sigma, ntd_matrix
from helmono.cli import main
from helmono.errors import ConfigError, InvalidParameterError
from helmono.io import parse_config_text, read_pgm, read_symop_csv, write_pgm, write_symop_csv

K_STAR_N8 = 3.1614184302807775  # sqrt of the first positive Neumann eigenvalue, n = 8


def run(tmp_path, text, command, *extra):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    return main([command, str(cfg), *extra])


def base_cfg(outdir, n=16, k=1.0, **more):
    lines = [f"mesh.n = {n}", f"k = {k}", f"output.dir = {outdir}"]
    lines += [f"{key} = {value}" for key, value in more.items()]
    return "\n".join(lines) + "\n"


def read_kv(path):
    pairs = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition(" = ")
        pairs[key] = value
    return pairs


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("helmono ")


def test_mesh_command_writes_mesh_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert run(tmp_path, base_cfg(out, n=4), "mesh") == 0
    assert (out / "mesh.txt").exists()
    manifest = (out / "manifest.txt").read_text().splitlines()
    assert manifest[0] == "# helmono run manifest"
    assert "command = mesh" in manifest
    assert "config.mesh.n = 4" in manifest
    assert sum(ln.startswith("time.") for ln in manifest) == 1


def test_eigs_top_eigenvalue(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, n=32, **{"eigs.count": 2})
    assert run(tmp_path, text, "eigs") == 0
    lines = (out / "eigs.csv").read_text().splitlines()
    assert lines[0] == "index,value"
    top = float(lines[1].split(",")[1])
    assert abs(top - 1.0) <= 1e-3


def test_eigs_byte_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh.n = 16\nk = 1.0\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["eigs", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    a, b = outs
    assert (a / "eigs.csv").read_bytes() == (b / "eigs.csv").read_bytes()

    def stable(path):
        return [ln for ln in path.read_text().splitlines()
                if not ln.startswith("time.")]

    assert stable(a / "manifest.txt") == stable(b / "manifest.txt")


def test_identity_check_equal_coefficients(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, k=1.3,
                    **{"coefficient.background": 1.3, "coefficient2.background": 1.3})
    assert run(tmp_path, text, "identity-check") == 0
    pairs = read_kv(out / "identity.txt")
    assert pairs["g_mode"] == "first"
    assert pairs["residual"] == "0"


def test_identity_check_random_flux(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, seed=5,
                    **{"coefficient.background": 0.8, "coefficient2.background": 1.7,
                       "g.mode": "random"})
    assert run(tmp_path, text, "identity-check") == 0
    pairs = read_kv(out / "identity.txt")
    assert pairs["g_mode"] == "random"
    assert float(pairs["residual"]) <= 1e-9


def test_dq_routes_agree(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, k=2.0, **{"coefficient.background": 1.5})
    assert run(tmp_path, text, "dq") == 0
    pairs = read_kv(out / "dq.txt")
    assert pairs["agree"] == "true"
    assert pairs["d_of_q"] == pairs["count_K_eigs_above_one"]


def test_resonance_scan_brackets_known_resonance(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, n=8)
    text = text.replace("k = 1.0\n", "")
    text += "scan.k_min = 3.0\nscan.k_max = 3.3\nscan.steps = 7\n"
    assert run(tmp_path, text, "resonance-scan") == 0
    scan = (out / "scan.csv").read_text().splitlines()
    assert scan[0] == "k,lambda_nearest_zero"
    assert len(scan) == 8
    brackets = (out / "brackets.csv").read_text().splitlines()
    assert brackets[0] == "k_lo,k_hi"
    assert len(brackets) == 2
    k_lo, k_hi = map(float, brackets[1].split(","))
    assert k_lo < K_STAR_N8 < k_hi


def test_ntd_roundtrip_and_dumps(tmp_path):
    out = tmp_path / "out"
    assert run(tmp_path, base_cfg(out, n=8), "ntd", "--dump-matrices") == 0
    assert (out / "system_matrix.csv").exists()
    assert (out / "load_matrix.csv").exists()
    mesh = mark_sigma(build_unit_square_mesh(8), "all")
    basis = boundary_basis(mesh)
    loaded = read_symop_csv(out / "ntd.csv", basis)
    direct = ntd_matrix(mesh, 1.0, 1.0, basis)
    assert np.array_equal(loaded.matrix, direct.matrix)  # 17 digits round-trip
    assert leq_d(loaded, direct, 0).verdict


def test_monotonicity_check_verdict(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, **{"coefficient.background": 1.0,
                            "coefficient2.background": 1.0,
                            "coefficient2.inclusion": "0.25 0.25 0.75 0.75 1.5"})
    assert run(tmp_path, text, "monotonicity-check") == 0
    pairs = read_kv(out / "comparison.txt")
    assert pairs["verdict"] == "true"
    assert int(pairs["negative_count"]) <= int(pairs["d_allowed"])
    assert pairs["indeterminate_count"] == "0"


def test_monotonicity_check_rejects_unordered(tmp_path, capsys):
    out = tmp_path / "out"
    text = base_cfg(out, **{"coefficient.background": 2.0,
                            "coefficient2.background": 1.0})
    assert run(tmp_path, text, "monotonicity-check") == 5
    assert "error:" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(tmp_path, base_cfg(out, **{"eigs.count": 3}), "dq") == 2
    err = capsys.readouterr().err
    assert "unknown key 'eigs.count'" in err
    assert "line 4" in err


def test_duplicate_key_rejected(tmp_path, capsys):
    out = tmp_path / "out"
    text = base_cfg(out) + "mesh.n = 8\n"
    assert run(tmp_path, text, "mesh") == 2
    err = capsys.readouterr().err
    assert "duplicate key 'mesh.n'" in err
    assert "line 4" in err and "line 1" in err


def test_bad_selector_rejected(tmp_path, capsys):
    out = tmp_path / "out"
    text = base_cfg(out, **{"sigma.selector": "diagonal"})
    assert run(tmp_path, text, "mesh") == 2
    assert "sigma.selector" in capsys.readouterr().err


def test_missing_output_dir_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh.n = 4\nk = 1\n")
    assert main(["mesh", str(cfg)]) == 2
    assert "output.dir" in capsys.readouterr().err


def test_ntd_at_resonance_exit_code(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(tmp_path, base_cfg(out, n=8, k=K_STAR_N8), "ntd") == 3
    assert "error:" in capsys.readouterr().err
    assert not (out / "ntd.csv").exists()


def test_dq_at_resonance_is_ambiguous(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(tmp_path, base_cfg(out, n=8, k=K_STAR_N8), "dq") == 4
    assert "error:" in capsys.readouterr().err


def test_reconstruct_no_scatterer_all_rejected(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, **{"grid.nx": 4, "grid.ny": 4,
                            "alpha.policy": "fixed", "alpha.value": 0.5})
    assert run(tmp_path, text, "reconstruct") == 0
    mask = read_pgm(out / "mask.pgm")
    assert mask.shape == (4, 4)
    assert (mask == 0).all()
    rows = (out / "reconstruct.csv").read_text().splitlines()
    assert rows[0] == ("pixel,ix,iy,x0,y0,x1,y1,"
                       "negative_count,indeterminate_count,accepted")
    assert len(rows) == 17
    assert all(ln.endswith(",false") for ln in rows[1:])
    pairs = read_kv(out / "params.txt")
    assert pairs["alpha"] == "0.5"
    assert pairs["contrast"] == "positive"


def test_reconstruct_negative_sweep(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, **{"grid.nx": 4, "grid.ny": 4, "contrast": "negative",
                            "coefficient.inclusion": "0.25 0.25 0.5 0.5 0.5"})
    assert run(tmp_path, text, "reconstruct") == 0
    pairs = read_kv(out / "params.txt")
    assert pairs["alpha"] == "0.25"
    mask = read_pgm(out / "mask.pgm")
    assert mask[1, 1] == 255
    assert (mask == 255).sum() == 1
    sweep = (out / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "alpha,accepted_count"
    assert len(sweep) >= 2


def test_reconstruct_threads_equivalent(tmp_path):
    outs = []
    for name, threads in (("serial", "1"), ("pool", "4")):
        out = tmp_path / name
        text = base_cfg(out, **{"grid.nx": 3, "grid.ny": 3,
                                "alpha.policy": "fixed", "alpha.value": 0.5})
        assert run(tmp_path, text, "reconstruct", "--threads", threads) == 0
        outs.append(out)
    a, b = outs
    assert (a / "reconstruct.csv").read_bytes() == (b / "reconstruct.csv").read_bytes()
    assert (a / "mask.pgm").read_bytes() == (b / "mask.pgm").read_bytes()


def test_thread_env_fallback(tmp_path, monkeypatch, capsys):
    out = tmp_path / "out"
    monkeypatch.setenv("HELM_MONO_THREADS", "2")
    assert run(tmp_path, base_cfg(out, n=4), "mesh") == 0
    monkeypatch.setenv("HELM_MONO_THREADS", "0")
    assert run(tmp_path, base_cfg(out, n=4), "mesh") == 2
    monkeypatch.setenv("HELM_MONO_THREADS", "many")
    assert run(tmp_path, base_cfg(out, n=4), "mesh") == 2
    capsys.readouterr()


def test_out_flag_overrides_config_dir(tmp_path):
    ignored = tmp_path / "ignored"
    chosen = tmp_path / "chosen"
    assert run(tmp_path, base_cfg(ignored, n=4), "mesh", "--out", str(chosen)) == 0
    assert (chosen / "mesh.txt").exists()
    assert not ignored.exists()


def test_localize_multilevel_random_v(tmp_path):
    out = tmp_path / "out"
    text = base_cfg(out, seed=1,
                    **{"sigma.selector": "bottom",
                       "localize.b_box": "0.0 0.75 0.25 1.0",
                       "localize.d_box": "0.5 0.0 1.0 1.0",
                       "localize.v_dim": 2,
                       "localize.v_mode": "random",
                       "localize.segments": "4 8"})
    assert run(tmp_path, text, "localize") == 0
    rows = (out / "localize.csv").read_text().splitlines()
    assert rows[0] == "dim,ratio,b_energy,d_energy"
    assert len(rows) == 3
    for ln in rows[1:]:
        dim, ratio, b_energy, d_energy = ln.split(",")
        assert float(ratio) > 0.0
        assert float(b_energy) > 0.0
    assert int(rows[2].split(",")[0]) == 8
    g_rows = (out / "g.csv").read_text().splitlines()
    assert len(g_rows) == 9


def test_parse_config_text_details():
    entries = parse_config_text("# intro\n\na.b = 1\nc = two words\n")
    assert entries["a.b"] == ("1", 3)
    assert entries["c"] == ("two words", 4)
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("a = 1\nnonsense\n")
    with pytest.raises(ConfigError, match="empty key"):
        parse_config_text("= 3\n")


def test_pgm_roundtrip_orientation(tmp_path):
    values = np.array([[0, 128], [255, 0]])
    path = tmp_path / "img.pgm"
    write_pgm(path, values)
    lines = path.read_text().splitlines()
    assert lines[:3] == ["P2", "2 2", "255"]
    assert lines[3] == "255 0"  # top row first: values[1]
    assert lines[4] == "0 128"
    assert np.array_equal(read_pgm(path), values)
    with pytest.raises(InvalidParameterError):
        write_pgm(path, np.array([[300]]))


def test_symop_csv_validation(tmp_path):
    op = make_symop(np.eye(3), "abc", "thing", 2.0)
    path = tmp_path / "op.csv"
    write_symop_csv(path, op)
    back = read_symop_csv(path)
    assert back.label == "thing"
    assert back.k == 2.0
    assert np.array_equal(back.matrix, op.matrix)
    mesh = mark_sigma(build_unit_square_mesh(4), "all")
    with pytest.raises(InvalidParameterError, match="does not match basis"):
        read_symop_csv(path, boundary_basis(mesh))
    path.write_text("just,two\n")
    with pytest.raises(InvalidParameterError, match="malformed header"):
        read_symop_csv(path)
