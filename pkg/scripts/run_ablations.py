#!/usr/bin/env python3
"""Ablations on synthetic striped instances.

Sweeps the score family over norm orders, reweighting strategies, activation
exponents, and sampling ratios, then compares prune-and-grow fine-tuning
variants. All numbers are symmetric-objective values on synthetic data,
averaged over seeds; lower is better within a column.
"""

import argparse

import numpy as np

from symprune import calibration, dsnot, masking, reconstruction, scores
from symprune.verification import striped_instance


def objective(w, x, y, mask) -> float:
    return reconstruction.sym_objective(x, y, w, w * mask.keep).value


def sweep_norm_orders(instances, epsilon):
    print(f"\n# norm order sweep (score: reciprocal row/col p-norms, eps={epsilon})")
    for p in (1, 2, 3, 4, 0, np.inf):
        values = []
        for w, x, y in instances:
            mask = masking.build_unstructured_mask(scores.score_lp(w, p), epsilon)
            values.append(objective(w, x, y, mask))
        print(f"p={p!s:<4} g={np.mean(values):10.4f}")


def sweep_strategies(instances, epsilon):
    print(f"\n# reweighting strategy sweep (p=1, eps={epsilon})")
    for strategy in scores.STRATEGIES:
        values = []
        for w, x, y in instances:
            s = scores.score_strategy(w, 1, strategy)
            values.append(objective(w, x, y, masking.build_unstructured_mask(s, epsilon)))
        print(f"{strategy}  g={np.mean(values):10.4f}")


def sweep_alpha(instances, epsilon):
    print(f"\n# activation exponent sweep (relative importance * col_l2^alpha, eps={epsilon})")
    for alpha in (0.0, 0.5, 1.0, 2.0):
        values = []
        for w, x, y in instances:
            stats = calibration.compute_stats(x)
            s = scores.score_ria(w, stats, alpha=alpha, p=1)
            values.append(objective(w, x, y, masking.build_unstructured_mask(s, epsilon)))
        print(f"alpha={alpha:<4} g={np.mean(values):10.4f}")


def sweep_sampling_ratio(instances, epsilon, seeds=5):
    print(f"\n# sampling ratio sweep (mean over {seeds} seeds, eps={epsilon})")
    for beta in (1.0, 0.5, 0.1, 0.05):
        values = []
        for w, x, y in instances:
            stats = calibration.compute_stats(x)
            for seed in range(seeds):
                s = scores.score_stochria(w, stats, alpha=1.0, beta=beta, seed=seed)
                values.append(
                    objective(w, x, y, masking.build_unstructured_mask(s, epsilon))
                )
        print(f"beta={beta:<5} g={np.mean(values):10.4f}")


def compare_finetuning(instances, epsilon):
    print(f"\n# prune-and-grow fine-tuning (rows = output units, eps={epsilon})")
    rows = {"none": [], "vanilla": [], "r2": []}
    for w, x, y in instances:
        stats = calibration.compute_stats(x)
        s = scores.score_ria(w, stats, alpha=0.5, p=1)
        mask = masking.build_unstructured_mask(s, epsilon)
        rows["none"].append(objective(w, x, y, mask))
        mask_t = masking.SparsityMask(mask.keep.T, epsilon=epsilon)
        for variant in ("vanilla", "r2"):
            cfg = dsnot.DsnotConfig(variant=variant)
            new_mask_t, _ = dsnot.finetune(w.T, mask_t, stats, cfg)
            tuned = masking.SparsityMask(new_mask_t.keep.T, epsilon=epsilon)
            rows[variant].append(objective(w, x, y, tuned))
    for name, values in rows.items():
        print(f"{name:<8} g={np.mean(values):10.4f}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--instances", type=int, default=5)
    parser.add_argument("--epsilon", type=float, default=0.6)
    args = parser.parse_args()

    instances = [striped_instance(seed) for seed in range(args.instances)]
    print(f"instances={args.instances} (64x64 striped weights, 256x64 tokens)")
    sweep_norm_orders(instances, args.epsilon)
    sweep_strategies(instances, args.epsilon)
    sweep_alpha(instances, args.epsilon)
    sweep_sampling_ratio(instances, args.epsilon)
    compare_finetuning(instances, args.epsilon)


if __name__ == "__main__":
    main()
