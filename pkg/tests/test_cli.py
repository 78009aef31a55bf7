import os

import numpy as np
import pytest

from uhm_kit.cli import main
from uhm_kit.metrics import read_metrics


def run(args):
    return main(args)


def test_gen_writes_loadable_points(tmp_path, capsys):
    assert run(["gen", "--geometry", "sphere", "--n", "64", "--seed", "3", "--out", str(tmp_path)]) == 0
    path = capsys.readouterr().out.strip()
    assert os.path.exists(path)
    from uhm_kit import generate_sphere, load_points

    g = load_points(path)
    ref = generate_sphere(64, 1.0, seed=3)
    np.testing.assert_allclose(g.points, ref.points)


def test_gen_knot(tmp_path, capsys):
    assert run(["gen", "--geometry", "knot", "--n", "50", "--out", str(tmp_path)]) == 0
    path = capsys.readouterr().out.strip()
    from uhm_kit import load_points

    assert len(load_points(path)) == 50


def test_build_both_formats(tmp_path):
    out = str(tmp_path)
    code = run(
        ["build", "--geometry", "sphere", "--n", "500", "--eps", "1e-4", "--format", "both",
         "--workers", "2", "--out", out]
    )
    assert code == 0
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert len(rows) == 2
    by_fmt = {r["format"]: r for r in rows}
    assert by_fmt["uh"]["adm_elements"] < by_fmt["h"]["adm_elements"]
    assert os.path.exists(os.path.join(out, "structure_h.csv"))
    assert os.path.exists(os.path.join(out, "structure_uh_bases.csv"))
    assert os.path.exists(os.path.join(out, "structure_uh_coeffs.csv"))
    with open(os.path.join(out, "metrics.csv")) as fh:
        assert fh.readline().strip() == "# uhm-kit metrics v1"


def test_build_defaults_echoed(tmp_path):
    out = str(tmp_path)
    assert run(["build", "--n", "300", "--format", "h", "--out", out]) == 0
    (row,) = read_metrics(os.path.join(out, "metrics.csv"))
    assert row["eps"] == 1e-4
    assert row["eta"] == 10.0
    assert row["n_min"] == 30
    assert row["criterion"] == "weak"
    assert row["rel_spec_err"] is not None  # n below the dense cap


def test_build_deterministic_metrics(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    args = ["build", "--n", "300", "--format", "h", "--workers", "1"]
    assert run(args + ["--out", out1]) == 0
    assert run(args + ["--out", out2]) == 0
    (r1,) = read_metrics(os.path.join(out1, "metrics.csv"))
    (r2,) = read_metrics(os.path.join(out2, "metrics.csv"))
    timing = {"build_seconds", "matvec_mean_s", "matvec_min_s"}
    for key in r1:
        if key not in timing:
            assert r1[key] == r2[key], key


def test_build_helmholtz_kappa_h(tmp_path):
    out = str(tmp_path)
    assert run(
        ["build", "--n", "300", "--kernel", "helmholtz", "--kappa-h", "0.3", "--format", "h", "--out", out]
    ) == 0
    (row,) = read_metrics(os.path.join(out, "metrics.csv"))
    assert row["kappa"] > 0
    assert row["kappa_h"] == 0.3


def test_helmholtz_without_kappa_fails(tmp_path):
    assert run(["build", "--n", "100", "--kernel", "helmholtz", "--out", str(tmp_path)]) == 2


def test_invalid_n_fails(tmp_path):
    assert run(["build", "--n", "0", "--out", str(tmp_path)]) == 2


def test_matvec_repeats(tmp_path, capsys):
    out = str(tmp_path)
    code = run(
        ["matvec", "--n", "400", "--format", "both", "--repeats", "3", "--workers", "2", "--out", out]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "h/uh time ratio" in text
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert all(r["matvec_mean_s"] >= r["matvec_min_s"] > 0 for r in rows)


def test_matvec_single_repeat_mean_equals_min(tmp_path):
    out = str(tmp_path)
    assert run(["matvec", "--n", "300", "--format", "h", "--repeats", "1", "--out", out]) == 0
    (row,) = read_metrics(os.path.join(out, "metrics.csv"))
    assert row["matvec_mean_s"] == row["matvec_min_s"]


def test_sweep_eps_memory_monotone(tmp_path):
    out = str(tmp_path)
    code = run(
        ["sweep", "--axis", "eps", "--values", "1e-2,1e-3,1e-4", "--n", "600", "--format", "h",
         "--workers", "2", "--out", out]
    )
    assert code == 0
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    by_eps = sorted(rows, key=lambda r: -r["eps"])
    mems = [r["total_elements"] for r in by_eps]
    assert mems[0] <= mems[1] <= mems[2]
    assert os.path.exists(os.path.join(out, "sweep_eps.png"))


def test_sweep_requires_two_values(tmp_path):
    assert run(["sweep", "--axis", "eta", "--values", "10", "--n", "100", "--out", str(tmp_path)]) == 2


def test_sweep_duplicate_n_values_identical(tmp_path):
    out = str(tmp_path)
    code = run(
        ["sweep", "--axis", "n", "--values", "300,300", "--format", "h", "--workers", "1",
         "--no-plot", "--out", out]
    )
    assert code == 0
    r1, r2 = read_metrics(os.path.join(out, "metrics.csv"))
    timing = {"build_seconds", "matvec_mean_s", "matvec_min_s"}
    for key in r1:
        if key not in timing:
            assert r1[key] == r2[key], key


def test_sweep_n_emits_slope(tmp_path, capsys):
    out = str(tmp_path)
    code = run(
        ["sweep", "--axis", "n", "--values", "400,800", "--format", "h", "--workers", "2",
         "--no-plot", "--out", out]
    )
    assert code == 0
    assert "slope" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out, "slopes.csv"))


def test_no_plot_flag(tmp_path):
    out = str(tmp_path)
    run(["sweep", "--axis", "eps", "--values", "1e-2,1e-3", "--n", "300", "--format", "h",
         "--no-plot", "--out", out])
    assert not os.path.exists(os.path.join(out, "sweep_eps.png"))


def test_verify_small_instance(tmp_path):
    out = str(tmp_path)
    code = run(
        ["verify", "--n", "500", "--eps", "1e-3", "--format", "both", "--workers", "2", "--out", out]
    )
    assert code == 0
    with open(os.path.join(out, "errors.csv")) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "instance,format,rel_spec_err,iters"
    assert len(lines) == 3
    with open(os.path.join(out, "theorem.csv")) as fh:
        theorem = fh.read()
    assert "True" in theorem
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert all(r["rel_spec_err"] <= 1e-2 for r in rows)
    assert os.path.exists(os.path.join(out, "verify.png"))


def test_verify_all_dense_config_near_exact(tmp_path):
    out = str(tmp_path)
    code = run(
        ["verify", "--n", "200", "--eta", "1e-9", "--nmin", "20", "--format", "h", "--out", out]
    )
    assert code == 0
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert rows[0]["rel_spec_err"] is None or rows[0]["rel_spec_err"] <= 1e-12


def test_verify_large_instance_skips_dense(tmp_path, capsys):
    out = str(tmp_path)
    code = run(["verify", "--n", "2500", "--format", "h", "--no-plot", "--out", out])
    assert code == 0
    assert "skipping" in capsys.readouterr().out
    with open(os.path.join(out, "errors.csv")) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[1].split(",")[2] == ""


def test_file_geometry_roundtrip(tmp_path, capsys):
    assert run(["gen", "--geometry", "sphere", "--n", "300", "--out", str(tmp_path)]) == 0
    path = capsys.readouterr().out.strip()
    out = str(tmp_path / "m")
    assert run(["build", "--geometry", "file", "--file", path, "--format", "h", "--out", out]) == 0
    (row,) = read_metrics(os.path.join(out, "metrics.csv"))
    assert row["n"] == 300
    assert row["geometry"] == "file"


def test_file_geometry_requires_path(tmp_path):
    assert run(["build", "--geometry", "file", "--out", str(tmp_path)]) == 2
