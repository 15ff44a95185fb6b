"""Command-line checkpoint exporter."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, capture_stats, export_weights, write_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symprune-export",
        description="Export per-layer weight matrices (SYMW) and calibration "
        "activation stats (SYMA) from a torch checkpoint.",
    )
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--layers", default="*", help="layer name glob")
    parser.add_argument("--samples", type=int, default=128)
    parser.add_argument("--seqlen", type=int, default=2048)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument(
        "--calibration",
        default="random",
        help='.npy file of shape (n, seqlen, dim), or "zeros"/"random"',
    )
    parser.add_argument(
        "--weights-only",
        action="store_true",
        help="skip stats capture (required for state-dict checkpoints)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_weights(args.checkpoint, args.layers, args.out)
        if not args.weights_only:
            stats_manifest = capture_stats(
                args.checkpoint,
                args.calibration,
                args.layers,
                args.out,
                samples=args.samples,
                seq_len=args.seqlen,
                seed=args.seed,
            )
            manifest["calibration"] = {
                k: stats_manifest[k] for k in ("calibration", "samples", "seq_len", "seed")
            }
            manifest["stats"] = stats_manifest["stats"]
    except FileNotFoundError as exc:
        print(f"error: cannot read {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    path = write_manifest(args.out, manifest)
    print(f"exported {len(manifest['layers'])} layers; manifest at {path}")
    return 0


def entrypoint() -> None:
    sys.exit(main())
