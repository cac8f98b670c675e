"""SMP particle flow against the HJB-FP grid flow for the LQ game, on two grids."""

import argparse

import numpy as np

from mfglab import mfg
from mfglab.measures import flow_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--particles", type=int, default=2000)
    ap.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args()
    p = mfg.lq_mean_field()
    smp, hjb = {}, {}
    for nt, nx in ((50, 201), (100, 401)):
        smp[nt] = mfg.mfg_picard(p, tol=args.tol, nt=nt, nx=nx, particles=args.particles)
        hjb[nt] = mfg.hjb_fp_solve(p, nt=nt, nx=nx, tol=args.tol)
        ref = mfg.lq_mean_path(1.0, 1.0, 0.0, 1.0, 1.0, smp[nt].flow.times)
        print(
            f"nt={nt} nx={nx} smp_iters={smp[nt].iterations} hjb_iters={len(hjb[nt].residual_history)} "
            f"mean_err_smp={np.max(np.abs(smp[nt].flow.means() - ref)):.2e} "
            f"mean_err_hjb={np.max(np.abs(hjb[nt].flow.means() - ref)):.2e} "
            f"sup_w1={flow_distance(smp[nt].flow, hjb[nt].flow):.4f}"
        )
    bound = flow_distance(smp[50].flow, smp[100].flow) + flow_distance(hjb[50].flow, hjb[100].flow) + mfg.particle_floor(smp[100])
    print(f"grid bound {bound:.4f}")


if __name__ == "__main__":
    main()
