"""Wall-clock scaling in sequence length, single-threaded.

    python scripts/bench_scaling.py --n-list 512,1024,2048,4096 --reps 5
"""

import argparse
from pathlib import Path

from osa.harness import RunConfig, cmd_bench_scaling, render


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-list", default="512,1024,2048,4096")
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/bench_scaling.csv")
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed, d=args.d, heads=args.heads)
    rep = cmd_bench_scaling(cfg, [int(n) for n in args.n_list.split(",")], args.reps)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render(rep, "csv"))

    for row in rep.table:
        print(f"N={row['N']:6d} {row['mechanism']:7s} {row['median_s'] * 1e3:9.2f} ms {row['peak_bytes'] / 2**20:9.2f} MiB")
    for c in rep.checks:
        print(f"{'ok  ' if c.passed else 'FAIL'} {c.name}: {c.measured:.3f} (limit {c.bound})")
    print(f"table -> {out}")


if __name__ == "__main__":
    main()
