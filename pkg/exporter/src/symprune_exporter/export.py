"""Checkpoint loading, layer matching, weight export, and stats capture.

Checkpoints may be TorchScript archives, pickled nn.Module objects, or plain
state dicts. Weight export works for all three; stats capture needs a
runnable module (forward hooks), so state dicts are rejected there.

Layer weights stored output-major (torch's [out_features, in_features]) are
transposed on export so SYMW rows always index input features; the manifest
records the transpose.
"""

from __future__ import annotations

import fnmatch
import json
from pathlib import Path

import numpy as np
import torch

from .formats import StreamingStats, dump_symw


class ExportError(RuntimeError):
    pass


def load_checkpoint(path):
    """Return (module_or_none, weights_by_layer_name)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        module = torch.jit.load(str(path), map_location="cpu")
        return module, _module_weights(module)
    except RuntimeError:
        pass
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ExportError(f"cannot parse checkpoint {path}: {exc}") from exc
    if isinstance(payload, torch.nn.Module):
        return payload, _module_weights(payload)
    if isinstance(payload, dict):
        weights = {}
        for key, tensor in payload.items():
            if not isinstance(tensor, torch.Tensor) or not key.endswith(".weight"):
                continue
            weights[key[: -len(".weight")]] = tensor
        return None, weights
    raise ExportError(f"unsupported checkpoint payload type {type(payload).__name__}")


def _module_weights(module) -> dict[str, torch.Tensor]:
    weights = {}
    for name, sub in module.named_modules():
        w = getattr(sub, "weight", None)
        if name and isinstance(w, torch.Tensor):
            weights[name] = w.detach()
    return weights


def match_layers(weights: dict[str, torch.Tensor], pattern: str) -> list[str]:
    matched = sorted(name for name in weights if fnmatch.fnmatch(name, pattern))
    if not matched:
        raise ExportError(f"layer filter {pattern!r} matched no layers")
    for name in matched:
        if weights[name].dim() != 2:
            raise ExportError(
                f"layer {name!r} has rank-{weights[name].dim()} weight; only rank-2 supported"
            )
    return matched


def _sanitize(name: str) -> str:
    return name.replace("/", "_").replace(".", "_")


def export_weights(checkpoint, pattern: str, out_dir) -> dict:
    """Write one SYMW per matched layer plus a manifest; returns the manifest."""
    _, weights = load_checkpoint(checkpoint)
    matched = match_layers(weights, pattern)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name in matched:
        tensor = weights[name]
        cast = tensor.dtype != torch.float32
        # torch stores [out_features, in_features]; SYMW rows index inputs.
        values = tensor.to(torch.float32).numpy().T
        filename = _sanitize(name) + ".symw"
        (out_dir / filename).write_bytes(dump_symw(values))
        entries[name] = {
            "file": filename,
            "rows": values.shape[0],
            "cols": values.shape[1],
            "transposed": True,
            "cast_to_f32": cast,
        }
    manifest = {
        "schema": 1,
        "checkpoint": str(checkpoint),
        "layer_filter": pattern,
        "layers": entries,
    }
    return manifest


def make_calibration_source(spec: str, samples: int, seq_len: int, dim: int, seed: int):
    """Yield per-sample token matrices shaped (seq_len, dim).

    spec is a .npy path (array shaped (n, seq_len, dim)), "zeros", or
    "random" (counter-based normal noise keyed by the seed).
    """
    if spec == "zeros":
        for _ in range(samples):
            yield np.zeros((seq_len, dim), dtype=np.float32)
        return
    if spec == "random":
        for i in range(samples):
            key = ((seed & (1 << 64) - 1) << 32) | i
            rng = np.random.Generator(np.random.Philox(key=key))
            yield rng.standard_normal((seq_len, dim)).astype(np.float32)
        return
    data = np.load(spec)
    if data.ndim != 3 or data.shape[1] != seq_len:
        raise ExportError(
            f"calibration array must have shape (n, {seq_len}, dim), got {data.shape}"
        )
    if data.shape[0] < samples:
        raise ExportError(
            f"calibration source exhausted: need {samples} samples, found {data.shape[0]}"
        )
    for i in range(samples):
        yield data[i]


def capture_stats(
    checkpoint,
    calibration: str,
    pattern: str,
    out_dir,
    samples: int = 128,
    seq_len: int = 2048,
    seed: int = 0,
) -> dict:
    """Stream calibration samples through the model, reducing the inputs of
    every matched layer to SYMA stats; returns a manifest of stats files."""
    module, weights = load_checkpoint(checkpoint)
    if module is None:
        raise ExportError(
            "stats capture needs a runnable module (TorchScript or pickled nn.Module); "
            "this checkpoint holds only a state dict"
        )
    matched = match_layers(weights, pattern)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    stats = {name: StreamingStats(weights[name].shape[1]) for name in matched}
    hooks = []

    def make_hook(name):
        def hook(mod, args):
            stats[name].update(args[0].detach().to(torch.float64).numpy())

        return hook

    name_to_module = dict(module.named_modules())
    for name in matched:
        hooks.append(name_to_module[name].register_forward_pre_hook(make_hook(name)))
    # Synthetic sources need the model's own input width: take it from the
    # first weight-bearing module in registration order, not from the filter.
    dim = next(weights[n].shape[1] for n, _ in module.named_modules() if n in weights)
    try:
        with torch.no_grad():
            for sample in make_calibration_source(calibration, samples, seq_len, dim, seed):
                module(torch.as_tensor(sample, dtype=torch.float32))
    finally:
        for h in hooks:
            h.remove()

    entries = {}
    for name in matched:
        filename = _sanitize(name) + ".syma"
        (out_dir / filename).write_bytes(stats[name].to_syma())
        entries[name] = {
            "file": filename,
            "feature_count": stats[name].feature_count,
            "token_count": stats[name].token_count,
        }
    return {
        "schema": 1,
        "checkpoint": str(checkpoint),
        "layer_filter": pattern,
        "calibration": calibration,
        "samples": samples,
        "seq_len": seq_len,
        "seed": seed,
        "stats": entries,
    }


def write_manifest(out_dir, manifest: dict, name: str = "manifest.json") -> Path:
    path = Path(out_dir) / name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
