"""Four-step put price error under grid refinement."""

import argparse

from mfglab import fbsde


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[100, 200, 400, 800])
    args = ap.parse_args()
    spec = fbsde.black_scholes_instance()
    exact = fbsde.black_scholes_put(1.0, 1.0, 0.05, 0.2, 0.0, 1.0)
    prev = None
    print("n,price,rel_error,ratio")
    for n in args.levels:
        price = fbsde.solve_quasilinear_pde(spec, n, n + 1).at(0, 0.0)
        err = abs(price - exact) / exact
        print(f"{n},{price:.8f},{err:.3e},{'' if prev is None else f'{prev / err:.2f}'}")
        prev = err


if __name__ == "__main__":
    main()
