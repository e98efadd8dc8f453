"""Plot EP against Gibbs smoothing means from scripts/random_walk.py output.

Needs the ``plot`` extra (matplotlib).

    python3 scripts/plot_comparison.py out/random_walk
"""

import sys
from pathlib import Path

import numpy as np


def main(path="out/random_walk"):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(path)
    d = np.load(out / "moments.npz")
    p = 2
    fig, axes = plt.subplots(p, 1, figsize=(8, 2.5 * p), sharex=True)
    for j, ax in enumerate(np.atleast_1d(axes)):
        t = np.arange(len(d["ep_mean"]) // p)
        ep_m, ep_s = d["ep_mean"][j::p], np.sqrt(d["ep_var"][j::p])
        ax.fill_between(t, ep_m - 2 * ep_s, ep_m + 2 * ep_s, alpha=0.2, label="EP +/- 2 sd")
        ax.plot(t, ep_m, label="EP mean")
        ax.plot(t, d["mc_mean"][j::p], "--", label="Gibbs mean")
        ax.set_ylabel(f"state {j + 1}")
    axes[0].legend(loc="best", fontsize="small")
    axes[-1].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out / "comparison.png", dpi=120)
    print(out / "comparison.png")


if __name__ == "__main__":
    main(*sys.argv[1:])
