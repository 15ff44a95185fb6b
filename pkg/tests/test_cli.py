"""CLI flows: exit codes, file outputs, manifests, reproducibility."""

import json
import subprocess
import sys

import numpy as np
import pytest

from symprune import calibration, masking
from symprune.cli import main
from symprune.matrix import write_symw
from symprune.rng import philox_generator
from symprune.verification import striped_instance


@pytest.fixture()
def fixture_files(tmp_path):
    w, x, y = striped_instance(0)
    paths = {
        "weights": tmp_path / "w.symw",
        "x": tmp_path / "x.symw",
        "y": tmp_path / "y.symw",
        "stats": tmp_path / "s.syma",
        "dir": tmp_path,
    }
    write_symw(paths["weights"], w)
    write_symw(paths["x"], x)
    write_symw(paths["y"], y)
    calibration.write_stats(paths["stats"], calibration.compute_stats(x))
    return paths


def run(*argv):
    return main([str(a) for a in argv])


def test_prune_ria_density(fixture_files, capsys):
    out = fixture_files["dir"] / "mask.symm"
    code = run(
        "prune", "--weights", fixture_files["weights"], "--stats", fixture_files["stats"],
        "--method", "ria", "--alpha", "0.5", "--sparsity", "0.5", "--out", out,
    )
    assert code == 0
    assert "density=0.500000" in capsys.readouterr().out
    mask = masking.read_symm(out)
    assert masking.mask_density(mask) == 0.5
    manifest = json.loads((fixture_files["dir"] / "mask.symm.manifest.json").read_text())
    assert manifest["command"] == "prune"
    assert manifest["config"]["method"] == "ria"
    assert "sha256" in manifest["inputs"]["weights"]


def test_prune_wanda_without_stats_exits_3(fixture_files, tmp_path):
    code = run(
        "prune", "--weights", fixture_files["weights"], "--method", "wanda",
        "--sparsity", "0.5", "--out", tmp_path / "m.symm",
    )
    assert code == 3


def test_prune_nm_pattern(fixture_files, tmp_path):
    out = tmp_path / "nm.symm"
    code = run(
        "prune", "--weights", fixture_files["weights"], "--method", "magnitude",
        "--pattern", "2:4", "--out", out,
    )
    assert code == 0
    mask = masking.read_symm(out)
    counts = mask.keep.reshape(16, 4, 64).sum(axis=1)
    assert (counts == 2).all()


def test_prune_rejects_both_sparsity_and_pattern(fixture_files, tmp_path):
    code = run(
        "prune", "--weights", fixture_files["weights"], "--method", "magnitude",
        "--sparsity", "0.5", "--pattern", "2:4", "--out", tmp_path / "m.symm",
    )
    assert code == 3


def test_prune_indivisible_pattern_exits_3(fixture_files, tmp_path):
    code = run(
        "prune", "--weights", fixture_files["weights"], "--method", "magnitude",
        "--pattern", "2:5", "--out", tmp_path / "m.symm",
    )
    assert code == 3  # 64 rows not divisible by 5


def test_prune_unknown_method_exits_3(fixture_files, tmp_path):
    code = run(
        "prune", "--weights", fixture_files["weights"], "--method", "sparsegpt",
        "--sparsity", "0.5", "--out", tmp_path / "m.symm",
    )
    assert code == 3


def test_prune_corrupt_weights_exits_2(tmp_path):
    bad = tmp_path / "bad.symw"
    bad.write_bytes(b"garbage")
    code = run("prune", "--weights", bad, "--method", "magnitude", "--sparsity", "0.5",
               "--out", tmp_path / "m.symm")
    assert code == 2


def test_prune_missing_file_exits_2(tmp_path):
    code = run("prune", "--weights", tmp_path / "absent.symw", "--method", "magnitude",
               "--sparsity", "0.5", "--out", tmp_path / "m.symm")
    assert code == 2


def test_eval_all_ones_mask_is_zero(fixture_files, tmp_path, capsys):
    mask_path = tmp_path / "ones.symm"
    masking.write_symm(mask_path, masking.SparsityMask(np.ones((64, 64), dtype=bool)))
    code = run(
        "eval", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--x", fixture_files["x"], "--y", fixture_files["y"], "--objective", "sym",
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "value=0.0" in out


def test_eval_worked_example(tmp_path, capsys):
    write_symw(tmp_path / "w.symw", np.array([[1.0, -2.0], [3.0, 4.0]]))
    write_symw(tmp_path / "x.symw", np.array([[1.0, 0.0], [0.0, 2.0]]))
    write_symw(tmp_path / "y.symw", np.array([[3.0, 0.0], [0.0, 5.0]]))
    pruned = np.array([[0.0, -2.0], [3.0, 4.0]])
    write_symw(tmp_path / "p.symw", pruned)
    json_path = tmp_path / "report.json"
    code = run(
        "eval", "--weights", tmp_path / "w.symw", "--pruned", tmp_path / "p.symw",
        "--x", tmp_path / "x.symw", "--y", tmp_path / "y.symw",
        "--objective", "sym", "--json", json_path,
    )
    assert code == 0
    report = json.loads(json_path.read_text())["report"]
    assert report["value"] == pytest.approx(4.0)
    assert report["input_term"] == pytest.approx(1.0)
    assert report["output_term"] == pytest.approx(3.0)


def test_eval_missing_y_warns_and_zeroes_term(fixture_files, tmp_path, capsys):
    mask_path = tmp_path / "m.symm"
    masking.write_symm(
        mask_path,
        masking.build_unstructured_mask(philox_generator(0, 1, 0).random((64, 64)), 0.5),
    )
    code = run(
        "eval", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--x", fixture_files["x"], "--objective", "sym",
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "output term is 0" in captured.err
    assert "output_term=0.0" in captured.out


def test_eval_inprecon_requires_x(fixture_files, tmp_path):
    mask_path = tmp_path / "m.symm"
    masking.write_symm(mask_path, masking.SparsityMask(np.ones((64, 64), dtype=bool)))
    code = run(
        "eval", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--objective", "inprecon",
    )
    assert code == 3


def test_finetune_density_preserved_and_reported(fixture_files, tmp_path, capsys):
    mask_path = tmp_path / "m.symm"
    run(
        "prune", "--weights", fixture_files["weights"], "--stats", fixture_files["stats"],
        "--method", "ria", "--sparsity", "0.5", "--out", mask_path,
    )
    out_path = tmp_path / "ft.symm"
    code = run(
        "finetune", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--stats", fixture_files["stats"], "--out", out_path,
    )
    assert code == 0
    before = masking.read_symm(mask_path)
    after = masking.read_symm(out_path)
    assert after.keep.sum() == before.keep.sum()
    report = json.loads((tmp_path / "ft.symm.report.json").read_text())
    assert report["schema"] == 1
    assert "cycles_histogram" in report
    assert max(report["per_row_cycles"]) <= 50
    manifest = json.loads((tmp_path / "ft.symm.manifest.json").read_text())
    assert manifest["config"]["relative_prune"] is True
    assert manifest["config"]["relative_grow"] is False
    assert manifest["config"]["reg_p"] == "2"


def test_finetune_unchanged_mask_byte_identical(fixture_files, tmp_path):
    # A dense mask trivially satisfies the threshold: nothing is pruned.
    mask_path = tmp_path / "ones.symm"
    masking.write_symm(mask_path, masking.SparsityMask(np.ones((64, 64), dtype=bool)))
    out_path = tmp_path / "out.symm"
    code = run(
        "finetune", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--stats", fixture_files["stats"], "--out", out_path,
    )
    assert code == 0
    assert out_path.read_bytes() == mask_path.read_bytes()


def test_verify_suites(capsys):
    assert run("verify", "--suite", "lemmas", "--trials", "40", "--seed", "0") == 0
    out = capsys.readouterr().out
    assert "single_prune_identity" in out and "PASS" in out
    assert run("verify", "--suite", "oracle", "--trials", "40", "--seed", "0") == 0
    assert run("verify", "--suite", "nope") == 3


def test_stats_command(fixture_files, tmp_path, capsys):
    out = tmp_path / "derived.syma"
    code = run("stats", "--input", fixture_files["x"], "--out", out)
    assert code == 0
    got = calibration.read_stats(out)
    assert got.token_count == 256
    assert got.feature_count == 64


def test_sweep_row_counting_and_determinism(fixture_files, tmp_path):
    out1 = tmp_path / "sweep1.csv"
    out2 = tmp_path / "sweep2.csv"
    argv = [
        "sweep", "--weights", fixture_files["weights"], "--x", fixture_files["x"],
        "--y", fixture_files["y"], "--methods", "magnitude,wanda,ria",
        "--alphas", "0.5,1.0", "--seeds", "0,1",
    ]
    assert run(*argv, "--out", out1) == 0
    assert run(*argv, "--out", out2) == 0
    lines = out1.read_text().splitlines()
    assert len(lines) == 1 + 12  # header + 3 methods x 2 alphas x 2 seeds
    assert out1.read_bytes() == out2.read_bytes()


def test_sweep_single_cell(fixture_files, tmp_path):
    out = tmp_path / "one.csv"
    code = run(
        "sweep", "--weights", fixture_files["weights"], "--x", fixture_files["x"],
        "--methods", "lp", "--out", out,
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 2


def test_sweep_stochria_full_support_matches_ria(fixture_files, tmp_path):
    out = tmp_path / "beta.csv"
    code = run(
        "sweep", "--weights", fixture_files["weights"], "--x", fixture_files["x"],
        "--y", fixture_files["y"], "--methods", "ria,stochria", "--alphas", "1.0",
        "--betas", "1.0", "--seeds", "0,7", "--out", out,
    )
    assert code == 0
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    ria = {r["seed"]: r for r in rows if r["method"] == "ria"}
    stoch = {r["seed"]: r for r in rows if r["method"] == "stochria"}
    for seed, row in stoch.items():
        for col in ("density", "inprecon", "g", "g_squared"):
            assert row[col] == ria[seed][col]


def test_sweep_malformed_grid_exits_3(fixture_files, tmp_path):
    code = run(
        "sweep", "--weights", fixture_files["weights"], "--x", fixture_files["x"],
        "--methods", "ria", "--alphas", "zap", "--out", tmp_path / "x.csv",
    )
    assert code == 3


def test_prune_reproducibility_byte_identical(fixture_files, tmp_path):
    out1, out2 = tmp_path / "a.symm", tmp_path / "b.symm"
    argv = [
        "prune", "--weights", fixture_files["weights"], "--stats", fixture_files["stats"],
        "--method", "stochria", "--alpha", "1.0", "--beta", "0.1", "--seed", "13",
        "--sparsity", "0.6",
    ]
    assert run(*argv, "--out", out1) == 0
    assert run(*argv, "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_prune_reproducible_across_processes(fixture_files, tmp_path):
    outs = [tmp_path / "q1.symm", tmp_path / "q2.symm"]
    for out in outs:
        proc = subprocess.run(
            [
                sys.executable, "-m", "symprune", "prune",
                "--weights", str(fixture_files["weights"]),
                "--stats", str(fixture_files["stats"]),
                "--method", "stochria", "--alpha", "1.0", "--seed", "11",
                "--sparsity", "0.5", "--out", str(out),
            ],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_finetune_reproducibility_byte_identical(fixture_files, tmp_path):
    mask_path = tmp_path / "m.symm"
    run(
        "prune", "--weights", fixture_files["weights"], "--stats", fixture_files["stats"],
        "--method", "wanda", "--alpha", "1.0", "--sparsity", "0.7", "--out", mask_path,
    )
    out1, out2 = tmp_path / "f1.symm", tmp_path / "f2.symm"
    argv = [
        "finetune", "--weights", fixture_files["weights"], "--mask", mask_path,
        "--stats", fixture_files["stats"], "--variant", "r2",
    ]
    assert run(*argv, "--out", out1) == 0
    assert run(*argv, "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()
    r1 = json.loads((tmp_path / "f1.symm.report.json").read_text())
    r2 = json.loads((tmp_path / "f2.symm.report.json").read_text())
    assert r1 == r2
