#!/usr/bin/env python3
"""Verify analytic gradients against central finite differences for every
parameter tensor, across all ablation variants, on a tiny double-precision
model. Prints a per-tensor table and exits nonzero on failure."""

import argparse
import sys

from tdam.model import ABLATIONS, ModelConfig, grad_check

TINY = ModelConfig(
    d_in=6, d_model=8, n_heads=2, n_agents=2, n_landmarks=4,
    srmamba_layers=1, srmamba_rate=2, ssm_state_dim=2, dropout=0.25, agent_bias_side=3,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tolerance", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--verbose", action="store_true", help="print every tensor, not just the worst")
    args = ap.parse_args()

    ok = True
    for ablation in ABLATIONS:
        report = grad_check(TINY.with_ablation(ablation), n_patches=5, seed=args.seed)
        status = "ok" if report.ok(args.tolerance) else "FAIL"
        print(f"[{status}] {ablation:15s} max rel err {report.max_rel_err:.3e} "
              f"({report.n_params} params, {report.elapsed_s:.1f}s)")
        if args.verbose:
            for name, err in sorted(report.per_tensor.items(), key=lambda kv: -kv[1]):
                print(f"    {name:20s} {err:.3e}")
        ok &= report.ok(args.tolerance)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
