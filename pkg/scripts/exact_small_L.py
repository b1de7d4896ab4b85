"""Exact d(t) for small intervals: mixing times per L and the worst start.

    python scripts/exact_small_L.py --q 0.9 --Lmax 10
"""
import argparse

import numpy as np

from kcm_lab import mixing as M


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=float, default=0.9)
    ap.add_argument("--Lmax", type=int, default=10)
    ap.add_argument("--eps", type=float, default=0.25)
    args = ap.parse_args()
    grid = np.linspace(0, 80, 1601)
    print(f"{'L':>3} {'t_mix(ones)':>12} {'worst start':>14} {'is ones':>8} {'tv worst':>9}")
    for L in range(1, args.Lmax + 1):
        G = M.build_generator(L, args.q)
        ones = (1 << L) - 1
        tm = M.crossing_time(grid, M.tv_exact(G, ones, grid), args.eps)
        # the start search is exhaustive, keep it to L <= 8
        if L <= 8:
            k, tv = M.worst_start(G, tm)
            ws = format(k, f"0{L}b")[::-1]
            print(f"{L:>3} {tm:>12.3f} {ws:>14} {str(k == ones):>8} {tv:>9.4f}")
        else:
            print(f"{L:>3} {tm:>12.3f} {'-':>14} {'-':>8} {'-':>9}")


if __name__ == "__main__":
    main()
