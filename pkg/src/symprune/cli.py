"""Command-line surface: prune, eval, finetune, verify, sweep, stats.

Exit codes: 0 success, 1 verification failure, 2 unreadable/malformed input
file, 3 configuration conflict. Every run that writes an output file also
writes `<out>.manifest.json` recording the resolved configuration and the
sha256 of each input; commands without an output file embed the manifest in
their JSON report. Outputs are deterministic functions of inputs + flags +
seed, so re-running a command reproduces its artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, calibration, dsnot, masking, reconstruction, scores, verification
from .matrix import FormatError, read_symw, write_symw

THREADS_ENV = "SYMPRUNE_THREADS"

CLI_METHODS = ("magnitude", "wanda", "symmetric", "lp", "ria", "stochria", "strategy")
_STATS_REQUIRED = ("wanda", "ria")


class ConfigError(ValueError):
    """Flags that parse but contradict each other or the input files."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(command: str, config: dict, inputs: dict[str, Path], started: float) -> dict:
    return {
        "schema": 1,
        "tool": "symprune",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in inputs.items()
            if path is not None
        },
        "duration_seconds": time.monotonic() - started,
    }


def _write_manifest(out_path: Path, manifest: dict) -> None:
    path = Path(str(out_path) + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_p(raw: str):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse norm order {raw!r}") from None
    if math.isinf(value) and value > 0:
        return math.inf
    if math.isfinite(value) and value == int(value):
        return int(value)
    raise ConfigError(f"unsupported norm order {raw!r}")


def _parse_pattern(raw: str) -> tuple[int, int]:
    parts = raw.split(":")
    if len(parts) != 2:
        raise ConfigError(f"pattern must look like N:M, got {raw!r}")
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"pattern must look like N:M, got {raw!r}") from None
    if not 0 < n <= m:
        raise ConfigError(f"pattern requires 0 < N <= M, got {raw!r}")
    return n, m


def _load_stats_if(path: str | None) -> calibration.ActivationStats | None:
    return calibration.read_stats(path) if path else None


def _resolve_score(args, w, stats) -> np.ndarray:
    config = scores.ScoreConfig(
        method=args.method,
        alpha=args.alpha,
        p=_parse_p(args.p),
        beta=args.beta,
        seed=args.seed,
        strategy=args.strategy,
        symmetric_variant=args.symmetric_variant,
    )
    if args.method in _STATS_REQUIRED and stats is None:
        raise ConfigError(f"method '{args.method}' requires --stats")
    if args.method == "stochria" and args.alpha > 0 and stats is None:
        raise ConfigError("method 'stochria' with alpha > 0 requires --stats")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.method == "stochria" and args.trials > 1:
        acc = np.zeros_like(w)
        for t in range(args.trials):
            acc += scores.score_stochria(w, stats, args.alpha, args.beta, args.seed + t)
        return acc / args.trials
    return scores.compute_score(w, config, stats=stats)


def cmd_prune(args) -> int:
    started = time.monotonic()
    w = read_symw(args.weights)
    stats = _load_stats_if(args.stats)
    if stats is not None and stats.feature_count != w.shape[0]:
        raise ConfigError(
            f"stats cover {stats.feature_count} features but weights have {w.shape[0]} rows"
        )
    if args.method not in CLI_METHODS:
        raise ConfigError(f"unknown method {args.method!r}; choices: {', '.join(CLI_METHODS)}")
    if (args.sparsity is None) == (args.pattern is None):
        raise ConfigError("exactly one of --sparsity or --pattern must be given")
    score = _resolve_score(args, w, stats)
    if args.sparsity is not None:
        if not 0 <= args.sparsity < 1:
            raise ConfigError("--sparsity must lie in [0, 1)")
        if args.group not in masking.GROUPS:
            raise ConfigError(f"unknown group {args.group!r}")
        mask = masking.build_unstructured_mask(score, args.sparsity, args.group)
    else:
        n, m = _parse_pattern(args.pattern)
        if args.axis not in (masking.AXIS_INPUT, masking.AXIS_OUTPUT):
            raise ConfigError(f"unknown axis {args.axis!r}")
        mask = masking.build_nm_mask(score, n, m, args.axis)
    masking.write_symm(args.out, mask)
    if args.scores_out:
        write_symw(args.scores_out, score)
    config = {
        "method": args.method,
        "alpha": args.alpha,
        "p": str(args.p),
        "beta": args.beta,
        "seed": args.seed,
        "trials": args.trials,
        "strategy": args.strategy,
        "symmetric_variant": args.symmetric_variant,
        "sparsity": args.sparsity,
        "pattern": args.pattern,
        "group": args.group,
        "axis": args.axis,
        "out": str(args.out),
    }
    manifest = _manifest(
        "prune", config, {"weights": Path(args.weights), "stats": Path(args.stats) if args.stats else None}, started
    )
    _write_manifest(Path(args.out), manifest)
    print(f"density={masking.mask_density(mask):.6f}")
    print(f"score_min={score.min():.6g} score_mean={score.mean():.6g} score_max={score.max():.6g}")
    return 0


def cmd_eval(args) -> int:
    started = time.monotonic()
    w = read_symw(args.weights)
    if (args.pruned is None) == (args.mask is None):
        raise ConfigError("exactly one of --pruned or --mask must be given")
    if args.pruned:
        w_tilde = read_symw(args.pruned)
        if w_tilde.shape != w.shape:
            raise ConfigError("pruned weights shape differs from weights")
        density = float(np.count_nonzero(w_tilde) / w_tilde.size)
    else:
        mask = masking.read_symm(args.mask)
        w_tilde = masking.apply_mask(w, mask)
        density = masking.mask_density(mask)
    x = read_symw(args.x) if args.x else None
    y = read_symw(args.y) if args.y else None
    if args.objective not in reconstruction.OBJECTIVES:
        raise ConfigError(f"unknown objective {args.objective!r}")
    if args.objective == "inprecon":
        if x is None:
            raise ConfigError("objective 'inprecon' requires --x")
        value = reconstruction.inprecon(x, w, w_tilde)
        report = reconstruction.ObjectiveReport("inprecon", value, value, 0.0)
    else:
        if x is None:
            print("warning: no --x given; input term is 0", file=sys.stderr)
        if y is None:
            print("warning: no --y given; output term is 0", file=sys.stderr)
        fn = (
            reconstruction.sym_objective
            if args.objective == "sym"
            else reconstruction.sym_objective_squared
        )
        report = fn(x, y, w, w_tilde)
    for key, val in report.as_dict().items():
        print(f"{key}={val}")
    print(f"density={density}")
    config = {
        "objective": args.objective,
        "weights": str(args.weights),
        "pruned": args.pruned,
        "mask": args.mask,
    }
    inputs = {
        "weights": Path(args.weights),
        "pruned": Path(args.pruned) if args.pruned else None,
        "mask": Path(args.mask) if args.mask else None,
        "x": Path(args.x) if args.x else None,
        "y": Path(args.y) if args.y else None,
    }
    manifest = _manifest("eval", config, inputs, started)
    print(f"manifest={json.dumps(manifest, sort_keys=True)}")
    payload = {
        "schema": 1,
        "report": report.as_dict(),
        "density": density,
        "manifest": manifest,
    }
    if args.json:
        _write_json(Path(args.json), payload)
    return 0


def _dsnot_config(args) -> dsnot.DsnotConfig:
    return dsnot.DsnotConfig(
        variant=args.variant,
        max_cycles=args.max_cycles,
        update_threshold=args.update_threshold,
        gamma1=args.gamma1,
        gamma2=args.gamma2,
        reg_p=_parse_p(args.reg_p),
        alpha=args.alpha,
        relative_grow=args.relative_grow == "on",
        relative_prune=args.relative_prune == "on",
        variance_floor=args.variance_floor,
    )


def cmd_finetune(args) -> int:
    started = time.monotonic()
    w = read_symw(args.weights)
    mask = masking.read_symm(args.mask)
    stats = calibration.read_stats(args.stats)
    if mask.keep.shape != w.shape:
        raise ConfigError("mask shape differs from weights")
    if stats.feature_count != w.shape[0]:
        raise ConfigError(
            f"stats cover {stats.feature_count} features but weights have {w.shape[0]} rows"
        )
    if args.variant not in dsnot.VARIANTS:
        raise ConfigError(f"unknown variant {args.variant!r}")
    config = _dsnot_config(args)
    # Weights are stored input-major (rows = input features); the fine-tuner
    # walks per-output-unit rows whose entries align with the stats, so run
    # it on the transpose and flip the result back.
    mask_t = masking.SparsityMask(
        mask.keep.T, masking.PATTERN_UNSTRUCTURED, epsilon=float(1.0 - mask.keep.mean())
    )
    new_mask_t, report = dsnot.finetune(w.T, mask_t, stats, config)
    new_keep = new_mask_t.keep.T
    if bool((new_keep != mask.keep).any()):
        if mask.pattern == masking.PATTERN_NM:
            out_mask = masking.SparsityMask(
                new_keep, masking.PATTERN_UNSTRUCTURED, epsilon=float(1.0 - new_keep.mean())
            )
        else:
            out_mask = masking.SparsityMask(
                new_keep, mask.pattern, mask.epsilon, mask.n, mask.m, mask.axis
            )
    else:
        out_mask = mask
    masking.write_symm(args.out, out_mask)
    config_dict = {
        "variant": args.variant,
        "max_cycles": args.max_cycles,
        "update_threshold": args.update_threshold,
        "gamma1": args.gamma1,
        "gamma2": args.gamma2,
        "reg_p": str(args.reg_p),
        "alpha": args.alpha,
        "relative_grow": args.relative_grow == "on",
        "relative_prune": args.relative_prune == "on",
        "variance_floor": args.variance_floor,
        "out": str(args.out),
    }
    inputs = {
        "weights": Path(args.weights),
        "mask": Path(args.mask),
        "stats": Path(args.stats),
    }
    manifest = _manifest("finetune", config_dict, inputs, started)
    _write_manifest(Path(args.out), manifest)
    report_path = Path(args.report) if args.report else Path(str(args.out) + ".report.json")
    _write_json(report_path, report)
    print(f"density={masking.mask_density(out_mask):.6f}")
    print(f"sum_abs_expected_error_before={report['sum_abs_expected_error_before']}")
    print(f"sum_abs_expected_error_after={report['sum_abs_expected_error_after']}")
    return 0


def cmd_verify(args) -> int:
    started = time.monotonic()
    suites = {"lemmas", "oracle", "all"}
    if args.suite not in suites:
        raise ConfigError(f"unknown suite {args.suite!r}; choices: lemmas, oracle, all")
    outcomes = []
    if args.suite in ("lemmas", "all"):
        outcomes += verification.run_lemma_suite(trials=args.trials, seed=args.seed)
    if args.suite in ("oracle", "all"):
        outcomes += verification.run_oracle_suite(trials=args.trials, seed=args.seed)
    failed = False
    for o in outcomes:
        status = "PASS" if o.passed else "FAIL"
        failed = failed or not o.passed
        print(
            f"{o.name:<28} trials={o.trials:<6} max_dev={o.max_deviation:.3e} "
            f"tol={o.tolerance:.1e} {status}"
        )
    manifest = _manifest(
        "verify", {"suite": args.suite, "trials": args.trials, "seed": args.seed}, {}, started
    )
    print(f"manifest={json.dumps(manifest, sort_keys=True)}")
    return 1 if failed else 0


def _float_list(raw: str, flag: str) -> list[float]:
    try:
        values = [float(v) for v in raw.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"cannot parse {flag} value {raw!r}") from None
    if not values:
        raise ConfigError(f"{flag} must list at least one value")
    return values


def _int_list(raw: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"cannot parse {flag} value {raw!r}") from None
    if not values:
        raise ConfigError(f"{flag} must list at least one value")
    return values


_SWEEP_COLUMNS = (
    "method",
    "alpha",
    "p",
    "beta",
    "epsilon",
    "seed",
    "density",
    "inprecon",
    "g",
    "g_squared",
)


def cmd_sweep(args) -> int:
    started = time.monotonic()
    w = read_symw(args.weights)
    x = read_symw(args.x)
    y = read_symw(args.y) if args.y else None
    stats = _load_stats_if(args.stats)
    if stats is None:
        stats = calibration.compute_stats(x)
    if stats.feature_count != w.shape[0]:
        raise ConfigError("stats dimension does not match weight rows")
    methods = [m for m in args.methods.split(",") if m]
    if not methods:
        raise ConfigError("--methods must list at least one method")
    for m in methods:
        if m not in CLI_METHODS:
            raise ConfigError(f"unknown method {m!r} in grid")
    alphas = _float_list(args.alphas, "--alphas")
    ps = [_parse_p(v) for v in args.ps.split(",") if v]
    if not ps:
        raise ConfigError("--ps must list at least one value")
    betas = _float_list(args.betas, "--betas")
    epsilons = _float_list(args.epsilons, "--epsilons")
    seeds = _int_list(args.seeds, "--seeds")
    for e in epsilons:
        if not 0 <= e < 1:
            raise ConfigError(f"epsilon {e} outside [0, 1)")
    grid = [
        (method, alpha, p, beta, eps, seed)
        for method in methods
        for alpha in alphas
        for p in ps
        for beta in betas
        for eps in epsilons
        for seed in seeds
    ]

    def run_cell(cell):
        method, alpha, p, beta, eps, seed = cell
        config = scores.ScoreConfig(
            method=method, alpha=alpha, p=p, beta=beta, seed=seed, strategy=args.strategy
        )
        score = scores.compute_score(w, config, stats=stats)
        mask = masking.build_unstructured_mask(score, eps, args.group)
        w_tilde = masking.apply_mask(w, mask)
        g = reconstruction.sym_objective(x, y, w, w_tilde)
        g2 = reconstruction.sym_objective_squared(x, y, w, w_tilde)
        inp = reconstruction.inprecon(x, w, w_tilde)
        return {
            "method": method,
            "alpha": f"{alpha:g}",
            "p": str(p),
            "beta": f"{beta:g}",
            "epsilon": f"{eps:g}",
            "seed": seed,
            "density": f"{masking.mask_density(mask):.17g}",
            "inprecon": f"{inp:.17g}",
            "g": f"{g.value:.17g}",
            "g_squared": f"{g2.value:.17g}",
        }

    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, grid))
    else:
        rows = [run_cell(cell) for cell in grid]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    config = {
        "methods": args.methods,
        "alphas": args.alphas,
        "ps": args.ps,
        "betas": args.betas,
        "epsilons": args.epsilons,
        "seeds": args.seeds,
        "group": args.group,
        "strategy": args.strategy,
        "out": str(args.out),
    }
    inputs = {
        "weights": Path(args.weights),
        "x": Path(args.x),
        "y": Path(args.y) if args.y else None,
        "stats": Path(args.stats) if args.stats else None,
    }
    _write_manifest(Path(args.out), _manifest("sweep", config, inputs, started))
    print(f"rows={len(rows)} out={args.out}")
    return 0


def cmd_stats(args) -> int:
    started = time.monotonic()
    tokens = read_symw(args.input)
    stats = calibration.compute_stats(tokens)
    calibration.write_stats(args.out, stats)
    manifest = _manifest(
        "stats", {"input": str(args.input), "out": str(args.out)}, {"input": Path(args.input)}, started
    )
    _write_manifest(Path(args.out), manifest)
    print(f"features={stats.feature_count} tokens={stats.token_count}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symprune",
        description="Post-training pruning: importance scores, sparsity masks, "
        "objective evaluation, prune-and-grow fine-tuning, and identity checks.",
    )
    parser.add_argument("--version", action="version", version=f"symprune {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="score weights and write a sparsity mask")
    p.add_argument("--weights", required=True)
    p.add_argument("--stats")
    p.add_argument("--method", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--p", default="1")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1, help="stochria score averaging")
    p.add_argument("--strategy", default="S1")
    p.add_argument("--symmetric-variant", dest="symmetric_variant", default="sum_norm")
    p.add_argument("--sparsity", type=float)
    p.add_argument("--pattern", help="N:M structured pattern, e.g. 2:4")
    p.add_argument("--group", default="per_layer")
    p.add_argument("--axis", default=masking.AXIS_INPUT)
    p.add_argument("--out", required=True)
    p.add_argument("--scores-out", dest="scores_out", help="also write the score matrix (SYMW)")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="evaluate a reconstruction objective")
    p.add_argument("--weights", required=True)
    p.add_argument("--pruned")
    p.add_argument("--mask")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--objective", default="sym")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("finetune", help="prune-and-grow fine-tuning of a mask")
    p.add_argument("--weights", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--variant", default="r2")
    p.add_argument("--max-cycles", dest="max_cycles", type=int, default=50)
    p.add_argument("--update-threshold", dest="update_threshold", type=float, default=0.1)
    p.add_argument("--gamma1", type=float, default=0.0)
    p.add_argument("--gamma2", type=float, default=0.001)
    p.add_argument("--reg-p", dest="reg_p", default="2")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--relative-grow", dest="relative_grow", default="off", choices=("on", "off"))
    p.add_argument("--relative-prune", dest="relative_prune", default="on", choices=("on", "off"))
    p.add_argument("--variance-floor", dest="variance_floor", type=float, default=1e-12)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("verify", help="run numeric identity and oracle checks")
    p.add_argument("--suite", default="all")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid of prune configs -> objective CSV")
    p.add_argument("--weights", required=True)
    p.add_argument("--x", required=True, help="calibration token matrix (SYMW)")
    p.add_argument("--y", help="output calibration matrix (SYMW)")
    p.add_argument("--stats", help="override stats; default derives from --x")
    p.add_argument("--methods", required=True)
    p.add_argument("--alphas", default="0.5")
    p.add_argument("--ps", default="1")
    p.add_argument("--betas", default="0.1")
    p.add_argument("--epsilons", default="0.5")
    p.add_argument("--seeds", default="0")
    p.add_argument("--group", default="per_layer")
    p.add_argument("--strategy", default="S1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="reduce a token matrix (SYMW) to stats (SYMA)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: cannot read {exc.filename}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())
