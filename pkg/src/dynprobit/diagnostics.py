"""Accuracy summaries against a benchmark and runtime scaling of the two EP variants."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .ep import EpConfig, GaussianApprox, ep_smooth_dense, ep_smooth_lowrank
from .model import build_prior_covariance, random_walk_model

log = logging.getLogger(__name__)

QUANTILE_NAMES = ("min", "q25", "median", "q75", "max")


def _summary(values: np.ndarray) -> dict[str, float]:
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {k: float("nan") for k in QUANTILE_NAMES}
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(QUANTILE_NAMES, map(float, q)))


@dataclass
class MomentComparison:
    """Approximation minus benchmark, grouped by state component j.

    ``log_sd_diff`` is NaN at coordinates listed in ``excluded`` (zero
    variance on either side); group quantiles skip them.
    """

    mean_diff: np.ndarray
    log_sd_diff: np.ndarray
    p: int
    excluded: list[int]
    groups: list[dict] = field(default_factory=list)

    def group_indices(self, j: int) -> np.ndarray:
        return np.arange(j, len(self.mean_diff), self.p)

    def median_abs_mean_diff(self) -> np.ndarray:
        return np.array([np.median(np.abs(self.mean_diff[self.group_indices(j)]))
                         for j in range(self.p)])

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "mean_diff": self.mean_diff.tolist(),
            "log_sd_diff": [None if not np.isfinite(v) else float(v) for v in self.log_sd_diff],
            "excluded": self.excluded,
            "groups": self.groups,
            "median_abs_mean_diff": self.median_abs_mean_diff().tolist(),
        }


def compare_arrays(mean_a, var_a, mean_b, var_b, p: int) -> MomentComparison:
    mean_a, var_a, mean_b, var_b = (np.asarray(v, dtype=float) for v in (mean_a, var_a, mean_b, var_b))
    if not (mean_a.shape == var_a.shape == mean_b.shape == var_b.shape) or mean_a.ndim != 1:
        raise ValueError("moment vectors must be 1-d and of equal length")
    if len(mean_a) % p:
        raise ValueError(f"length {len(mean_a)} is not a multiple of p={p}")
    mean_diff = mean_a - mean_b
    ok = (var_a > 0) & (var_b > 0)
    log_sd = np.full_like(mean_diff, np.nan)
    log_sd[ok] = 0.5 * (np.log(var_a[ok]) - np.log(var_b[ok]))
    out = MomentComparison(mean_diff=mean_diff, log_sd_diff=log_sd, p=p,
                           excluded=np.nonzero(~ok)[0].tolist())
    for j in range(p):
        idx = out.group_indices(j)
        out.groups.append({"j": j + 1, "mean_diff": _summary(mean_diff[idx]),
                           "log_sd_diff": _summary(log_sd[idx])})
    return out


def compare_moments(approx: GaussianApprox, bench_mean, bench_var) -> MomentComparison:
    return compare_arrays(approx.mean, approx.var, bench_mean, bench_var, approx.p)


@dataclass
class TimingCell:
    n: int
    p: int
    dense_total: float
    lowrank_total: float
    dense_sweeps: int
    lowrank_sweeps: int
    converged: bool

    @property
    def dense_per_sweep(self) -> float:
        return self.dense_total / max(self.dense_sweeps, 1)

    @property
    def lowrank_per_sweep(self) -> float:
        return self.lowrank_total / max(self.lowrank_sweeps, 1)


@dataclass
class TimingReport:
    cells: list[TimingCell]
    slopes: dict = field(default_factory=dict)
    lowrank_faster: bool = True
    repeats: int = 3

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            d = asdict(c)
            d["dense_per_sweep"] = c.dense_per_sweep
            d["lowrank_per_sweep"] = c.lowrank_per_sweep
            cells.append(d)
        return {"cells": cells, "slopes": self.slopes,
                "lowrank_faster": self.lowrank_faster, "repeats": self.repeats}

    def csv_rows(self) -> list[dict]:
        return self.to_dict()["cells"]


def _time(fn, repeats: int):
    fn()  # warm-up, discarded
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times)), out


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _fit_slopes(cells: list[TimingCell]) -> dict:
    slopes = {}
    for axis, other in (("n", "p"), ("p", "n")):
        keys = sorted({getattr(c, other) for c in cells})
        for key in keys:
            row = sorted((c for c in cells if getattr(c, other) == key and c.converged),
                         key=lambda c: getattr(c, axis))
            if len({getattr(c, axis) for c in row}) < 4:
                continue
            xs = [getattr(c, axis) for c in row]
            slopes[f"{axis}|{other}={key}"] = {
                "dense": loglog_slope(xs, [c.dense_total for c in row]),
                "lowrank": loglog_slope(xs, [c.lowrank_total for c in row]),
                "ratio": [c.dense_total / c.lowrank_total for c in row],
                axis: xs,
            }
    return slopes


def scaling_benchmark(grid, config: EpConfig | None = None, seed: int = 0,
                      repeats: int = 3) -> TimingReport:
    """Time both EP variants on simulated random-walk instances.

    Each (n, p) cell runs one discarded warm-up and reports the median of
    ``repeats`` timed runs.  Only EP itself is timed, not the prior build.
    """
    config = config or EpConfig()
    cells = []
    for i, (n, p) in enumerate(grid):
        model = random_walk_model([seed, i], n=n, p=p)
        omega = build_prior_covariance(model)
        t_dense, dense = _time(lambda: ep_smooth_dense(omega, model, config), repeats)
        t_low, low = _time(lambda: ep_smooth_lowrank(omega, model, config), repeats)
        cell = TimingCell(n=n, p=p, dense_total=t_dense, lowrank_total=t_low,
                          dense_sweeps=dense.sweeps, lowrank_sweeps=low.sweeps,
                          converged=dense.converged and low.converged)
        if not cell.converged:
            log.warning("EP did not converge at n=%d p=%d; excluded from slope fit", n, p)
        log.info("n=%d p=%d dense %.4fs lowrank %.4fs (%d sweeps)", n, p, t_dense, t_low, low.sweeps)
        cells.append(cell)
    faster = all(c.lowrank_total < c.dense_total for c in cells if c.p >= 2 and c.n >= 100)
    return TimingReport(cells=cells, slopes=_fit_slopes(cells), lowrank_faster=faster,
                        repeats=repeats)
