"""Per-iteration wall time of the ComFP sampler against the number of training dyads.

    python scripts/scaling_benchmark.py --m 25000 50000 100000 200000
"""
import argparse
import time

import numpy as np

from comfp.model import ComfpConfig, fit, gibbs_sweep_comfp, init_hyper
from comfp.mmsb import init_state
from comfp.numerics import make_rng
from comfp.synth import random_split


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--t", type=int, default=10)
    ap.add_argument("--m", type=int, nargs="+", default=[50_000, 100_000, 200_000])
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args(argv)

    print("m\tms_per_iteration\tms_per_sweep")
    for m in args.m:
        split = random_split(args.n, m, seed=0)
        cfg = ComfpConfig(K=args.k, T=args.t, iterations=args.iters, tol=0.0)
        res = fit(split, cfg)
        rng = make_rng(1)
        hyper = init_hyper(split.n, [args.k], cfg, rng)
        state = init_state(split, args.k, rng)
        sweeps = []
        for _ in range(5):
            t0 = time.perf_counter()
            gibbs_sweep_comfp(state, hyper, rng)
            sweeps.append(time.perf_counter() - t0)
        print(f"{m}\t{1e3 * np.mean(res.seconds[1:]):.1f}\t{1e3 * np.median(sweeps):.1f}", flush=True)


if __name__ == "__main__":
    main()
