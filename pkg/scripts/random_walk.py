"""Fit EP on a simulated 241 x 2 random-walk probit and compare with Gibbs.

    python3 scripts/random_walk.py [--seed 3] [--draws 20000] [--out out/random_walk]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from dynprobit import (build_prior_covariance, ep_smooth_lowrank, mc_moments,
                       sample_smoothing_iid, sun_smoothing_params)
from dynprobit.diagnostics import compare_moments
from dynprobit.model import random_walk_model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--draws", type=int, default=20_000)
    ap.add_argument("--out", default="out/random_walk")
    args = ap.parse_args()

    model = random_walk_model(seed=args.seed)
    omega = build_prior_covariance(model)
    t0 = time.perf_counter()
    approx = ep_smooth_lowrank(omega, model)
    t_ep = time.perf_counter() - t0

    t0 = time.perf_counter()
    draws = sample_smoothing_iid(sun_smoothing_params(omega, model), args.draws,
                                 seed=args.seed, method="gibbs")
    mm = mc_moments(draws)
    t_mc = time.perf_counter() - t0

    cmp = compare_moments(approx, mm.mean, mm.var)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(out / "moments.npz", ep_mean=approx.mean, ep_var=approx.var,
             mc_mean=mm.mean, mc_var=mm.var, mc_se=mm.se_mean)
    summary = {"sweeps": approx.sweeps, "converged": approx.converged,
               "ep_seconds": t_ep, "gibbs_seconds": t_mc,
               "median_abs_mean_diff": cmp.median_abs_mean_diff().tolist()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
