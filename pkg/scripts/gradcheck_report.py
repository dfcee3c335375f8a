"""Finite-difference gradient check with per-configuration timing.

    python3 scripts/gradcheck_report.py --seed 1 --cases 20
"""
import argparse
import time

from plstm.gradcheck import TOLERANCE, run_gradcheck


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--cases", type=int, default=20)
    args = ap.parse_args()
    start = time.perf_counter()
    worst = 0.0
    print("cell layers cases max_rel_error")
    for r in run_gradcheck(args.seed, cases=args.cases):
        print(f"{r.cell} {r.layers} {r.cases} {r.max_rel_error:.3e}")
        worst = max(worst, r.max_rel_error)
    print(f"# worst {worst:.3e} (tolerance {TOLERANCE:.0e}), {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
