"""Exporter round-trips, stats capture, and manifest contents.

These tests deliberately load the emitted files with the pruning engine
(symprune) to prove the wire formats interoperate.
"""

import json

import numpy as np
import pytest
import torch

from symprune.calibration import read_stats
from symprune.matrix import read_symw

from symprune_exporter.cli import main
from symprune_exporter.export import (
    ExportError,
    capture_stats,
    export_weights,
    make_calibration_source,
    write_manifest,
)
from symprune_exporter.formats import StreamingStats


def make_toy_model(seed=0):
    torch.manual_seed(seed)
    return torch.nn.Sequential(
        torch.nn.Linear(6, 5),
        torch.nn.ReLU(),
        torch.nn.Linear(5, 3),
    )


@pytest.fixture()
def toy_checkpoint(tmp_path):
    model = make_toy_model()
    path = tmp_path / "toy.pt"
    torch.save(model, path)
    return path, model


@pytest.fixture()
def scripted_checkpoint(tmp_path):
    model = make_toy_model(1)
    path = tmp_path / "toy_scripted.pt"
    torch.jit.script(model).save(str(path))
    return path, model


def test_export_weights_round_trip_bit_identical(toy_checkpoint, tmp_path):
    path, model = toy_checkpoint
    out = tmp_path / "export"
    manifest = export_weights(path, "*", out)
    assert len(manifest["layers"]) == 2
    for name, module in (("0", model[0]), ("2", model[2])):
        entry = manifest["layers"][name]
        got = read_symw(out / entry["file"])
        want = module.weight.detach().numpy().T.astype(np.float64)
        np.testing.assert_array_equal(got, want)
        assert entry["transposed"] is True
        # rows index the layer's input features
        assert entry["rows"] == module.in_features
        assert got.shape == (module.in_features, module.out_features)


def test_export_weights_from_torchscript(scripted_checkpoint, tmp_path):
    path, model = scripted_checkpoint
    manifest = export_weights(path, "*", tmp_path / "export")
    got = read_symw(tmp_path / "export" / manifest["layers"]["0"]["file"])
    want = model[0].weight.detach().numpy().T.astype(np.float64)
    np.testing.assert_array_equal(got, want)


def test_export_weights_from_state_dict(tmp_path):
    model = make_toy_model(2)
    path = tmp_path / "sd.pt"
    torch.save(model.state_dict(), path)
    manifest = export_weights(path, "*", tmp_path / "export")
    assert sorted(manifest["layers"]) == ["0", "2"]
    got = read_symw(tmp_path / "export" / manifest["layers"]["2"]["file"])
    np.testing.assert_array_equal(got, model[2].weight.detach().numpy().T.astype(np.float64))


def test_filter_matching_nothing_errors_with_filter_echoed(toy_checkpoint, tmp_path):
    path, _ = toy_checkpoint
    with pytest.raises(ExportError, match="no_such_layer"):
        export_weights(path, "no_such_layer*", tmp_path / "export")


def test_two_layer_checkpoint_yields_two_files_and_manifest(toy_checkpoint, tmp_path):
    path, _ = toy_checkpoint
    out = tmp_path / "export"
    manifest = export_weights(path, "*", out)
    write_manifest(out, manifest)
    symw_files = sorted(p.name for p in out.glob("*.symw"))
    assert len(symw_files) == 2
    assert (out / "manifest.json").exists()
    on_disk = json.loads((out / "manifest.json").read_text())
    assert {e["file"] for e in on_disk["layers"].values()} == set(symw_files)


def test_zero_calibration_gives_zero_stats(toy_checkpoint, tmp_path):
    path, _ = toy_checkpoint
    out = tmp_path / "stats"
    manifest = capture_stats(path, "zeros", "0", out, samples=3, seq_len=4)
    entry = manifest["stats"]["0"]
    stats = read_stats(out / entry["file"])
    assert stats.token_count == 12
    assert not stats.col_l2.any() and not stats.mean.any() and not stats.variance.any()


def test_token_count_is_samples_times_seq_len(toy_checkpoint, tmp_path):
    path, _ = toy_checkpoint
    manifest = capture_stats(path, "random", "*", tmp_path / "stats", samples=5, seq_len=7)
    for entry in manifest["stats"].values():
        assert entry["token_count"] == 35
        stats = read_stats(tmp_path / "stats" / entry["file"])
        assert stats.token_count == 35


def test_stats_parse_in_engine_and_satisfy_invariants(toy_checkpoint, tmp_path):
    path, model = toy_checkpoint
    manifest = capture_stats(path, "random", "*", tmp_path / "stats", samples=4, seq_len=8, seed=3)
    for name, entry in manifest["stats"].items():
        stats = read_stats(tmp_path / "stats" / entry["file"])
        assert stats.feature_count == dict(model.named_modules())[name].in_features
        assert (stats.col_l2 >= 0).all()
        assert (stats.variance >= 0).all()
        assert (stats.col_l2**2 >= stats.token_count * stats.mean**2 - 1e-3).all()


def test_split_and_merge_matches_one_pass(toy_checkpoint, tmp_path):
    path, model = toy_checkpoint
    samples, seq_len, dim = 8, 6, 6
    batches = list(make_calibration_source("random", samples, seq_len, dim, seed=11))

    # Oracle: run the model once per sample, collect the second layer's
    # inputs, and reduce them in a single pass.
    collected = []
    hook = model[2].register_forward_pre_hook(
        lambda mod, args: collected.append(args[0].detach().numpy().copy())
    )
    with torch.no_grad():
        for sample in batches:
            model(torch.as_tensor(sample))
    hook.remove()
    tokens = np.concatenate([c.reshape(-1, 5) for c in collected]).astype(np.float64)

    manifest = capture_stats(path, "random", "2", tmp_path / "stats",
                             samples=samples, seq_len=seq_len, seed=11)
    stats = read_stats(tmp_path / "stats" / manifest["stats"]["2"]["file"])
    one_pass_l2 = np.sqrt((tokens**2).sum(axis=0))
    one_pass_mean = tokens.mean(axis=0)
    one_pass_var = tokens.var(axis=0)
    np.testing.assert_allclose(stats.col_l2, one_pass_l2, rtol=1e-5)
    np.testing.assert_allclose(stats.mean, one_pass_mean, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(stats.variance, one_pass_var, rtol=1e-5, atol=1e-6)


def test_streaming_stats_batch_invariance():
    rng = np.random.default_rng(0)
    tokens = rng.standard_normal((40, 4))
    one = StreamingStats(4)
    one.update(tokens)
    many = StreamingStats(4)
    for chunk in np.array_split(tokens, 7):
        many.update(chunk)
    np.testing.assert_allclose(one.mean, many.mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(one.m2, many.m2, rtol=1e-10, atol=1e-12)


def test_calibration_source_exhaustion(tmp_path):
    data = np.zeros((2, 4, 6), dtype=np.float32)
    npy = tmp_path / "calib.npy"
    np.save(npy, data)
    with pytest.raises(ExportError, match="exhausted"):
        list(make_calibration_source(str(npy), samples=5, seq_len=4, dim=6, seed=0))


def test_npy_calibration_source(toy_checkpoint, tmp_path):
    path, _ = toy_checkpoint
    data = np.ones((3, 4, 6), dtype=np.float32)
    npy = tmp_path / "calib.npy"
    np.save(npy, data)
    manifest = capture_stats(path, str(npy), "0", tmp_path / "stats", samples=3, seq_len=4)
    stats = read_stats(tmp_path / "stats" / manifest["stats"]["0"]["file"])
    np.testing.assert_allclose(stats.mean, np.ones(6), rtol=1e-6)
    np.testing.assert_allclose(stats.variance, np.zeros(6), atol=1e-9)


def test_state_dict_checkpoint_rejects_stats_capture(tmp_path):
    model = make_toy_model(3)
    path = tmp_path / "sd.pt"
    torch.save(model.state_dict(), path)
    with pytest.raises(ExportError, match="state dict"):
        capture_stats(path, "zeros", "*", tmp_path / "stats", samples=1, seq_len=2)


def test_cli_end_to_end(toy_checkpoint, tmp_path, capsys):
    path, _ = toy_checkpoint
    out = tmp_path / "cli_out"
    code = main([
        "--checkpoint", str(path), "--layers", "*", "--samples", "2",
        "--seqlen", "5", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["layers"]) == 2
    assert manifest["calibration"]["samples"] == 2
    assert len(list(out.glob("*.symw"))) == 2
    assert len(list(out.glob("*.syma"))) == 2


def test_cli_exit_codes(tmp_path):
    assert main(["--checkpoint", str(tmp_path / "none.pt"), "--out", str(tmp_path)]) == 2
    model = make_toy_model(4)
    path = tmp_path / "m.pt"
    torch.save(model, path)
    assert main(["--checkpoint", str(path), "--layers", "zzz*", "--out", str(tmp_path)]) == 3
