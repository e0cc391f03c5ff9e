"""Jacobian condition number of one head as alpha shrinks.

Writes one CSV row per (alpha, trial) and prints the per-alpha means.

    python scripts/alpha_sweep.py --trials 5 --basis ns --out results/alpha_sweep.csv
"""

import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from osa.harness import RunConfig, cmd_sweep_alpha, render


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", default="1e-4,1e-3,1e-2,1e-1,1")
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--heads", type=int, default=2)
    ap.add_argument("--basis", choices=["qr", "ns"], default="qr")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/alpha_sweep.csv")
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed, n=args.n, d=args.d, heads=args.heads, basis=args.basis, trials=args.trials)
    rep = cmd_sweep_alpha(cfg, [float(a) for a in args.alphas.split(",")])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render(rep, "csv"))

    by_alpha = defaultdict(list)
    for row in rep.table:
        by_alpha[row["alpha"]].append(row)
    print(f"{'alpha':>8} {'kappa_eff':>12} {'||J1||/alpha':>13} {'delta_hat':>10}")
    for alpha, rows in by_alpha.items():
        kappa = np.mean([r["kappa_eff"] for r in rows])
        slope = np.mean([r["j1_norm"] / alpha for r in rows])
        delta = np.mean([r["delta_hat"] for r in rows])
        print(f"{alpha:8.0e} {kappa:12.6f} {slope:13.4f} {delta:10.2e}")
    print(f"{len(rep.checks)} checks, {'all passed' if rep.passed else 'FAILURES'}; table -> {out}")


if __name__ == "__main__":
    main()
