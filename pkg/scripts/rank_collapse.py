"""Kernel spectra through attention-only stacks: orthogonal vs softmax attention.

    python scripts/rank_collapse.py --depth 24 --d 8
"""

import argparse
from pathlib import Path

from osa.harness import RunConfig, cmd_rank_demo, render


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=24)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--top-k", type=int, default=4)
    ap.add_argument("--out", default="results/rank_collapse.csv")
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed, n=args.n, d=args.d, heads=2)
    rep = cmd_rank_demo(cfg, args.depth, "both", args.top_k)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render(rep, "csv"))

    print(f"{'layer':>5} {'osa rank':>9} {'osa l2/l1':>10} {'ssa rank':>9} {'ssa l2/l1':>10}")
    rows = rep.table
    for osa, ssa in zip(rows[::2], rows[1::2]):
        print(
            f"{osa['layer']:5d} {osa['effective_rank']:9d} {osa['lambda_2'] / osa['lambda_1']:10.3e}"
            f" {ssa['effective_rank']:9d} {ssa['lambda_2'] / ssa['lambda_1']:10.3e}"
        )
    print(f"table -> {out}")


if __name__ == "__main__":
    main()
