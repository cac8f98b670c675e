"""Best-deviation gain of one player in the N-player LQ game using the mean-field feedback."""

import argparse

import numpy as np

from mfglab import mfg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, nargs="+", default=[10, 50, 250])
    ap.add_argument("--seeds", type=int, default=9)
    ap.add_argument("--budget", type=int, default=500)
    args = ap.parse_args()
    p = mfg.lq_mean_field()
    eq = mfg.mfg_picard(p, tol=1e-6, nt=50, nx=201, particles=2000)
    print("N,epsilon_median,gain_std_error_median")
    for n in args.N:
        est = [mfg.epsilon_nash_estimate(p, eq, n, args.budget, seed=s) for s in range(args.seeds)]
        print(f"{n},{np.median([e.epsilon for e in est]):.3e},{np.median([e.std_error for e in est]):.3e}")


if __name__ == "__main__":
    main()
