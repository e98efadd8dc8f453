"""Command-line entry point.

    dynprobit {simulate,fit,sample,compare,bench} CONFIG.json [--key value ...]

Exit status is 0 on success, 3 when EP stopped without converging (results
are still written) and 1 on any other failure, in which case a JSON error
object is printed to stderr.  Set DYNPROBIT_LOG (e.g. ``DEBUG``) for logs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import ConfigError, RunConfig, expand_matrix, load_config
from .ep import EpConfig, EpError, GaussianApprox, ep_smooth
from .model import DynamicProbitModel, ModelError, build_prior_covariance, simulate
from .sun import (SamplerError, mc_moments, quadrature_posterior_moments,
                  sample_smoothing_iid, sun_smoothing_params)

log = logging.getLogger("dynprobit")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 3


class DataError(ValueError):
    pass


def load_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read responses and covariates; rows are time points in order.

    Needs a header with ``y`` and ``x1`` .. ``xp`` (other columns are ignored).
    Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "y" not in header:
            raise DataError(f"{path}: missing column 'y'")
        p = 0
        while f"x{p + 1}" in header:
            p += 1
        if p == 0:
            raise DataError(f"{path}: missing column 'x1'")
        xcols = [f"x{j + 1}" for j in range(p)]
        ys, xs = [], []
        for row_no, row in enumerate(reader, start=1):
            raw_y = (row.get("y") or "").strip()
            if raw_y == "":
                raise DataError(f"row {row_no}: missing value in column y")
            try:
                yv = float(raw_y)
            except ValueError:
                raise DataError(f"row {row_no}: y not in {{0,1}}") from None
            if yv not in (0.0, 1.0):
                raise DataError(f"row {row_no}: y not in {{0,1}}")
            xrow = []
            for col in xcols:
                cell = (row.get(col) or "").strip()
                try:
                    val = float(cell)
                except ValueError:
                    raise DataError(f"row {row_no}: column {col} is not numeric") from None
                if not np.isfinite(val):
                    raise DataError(f"row {row_no}: column {col} is not finite")
                xrow.append(val)
            ys.append(int(yv))
            xs.append(xrow)
    if not ys:
        raise DataError(f"{path}: no data rows")
    return np.array(ys, dtype=np.int64), np.array(xs, dtype=float)


def write_csv(path, y: np.ndarray, X: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for yt, xt in zip(y, X):
            w.writerow([int(yt)] + [repr(float(v)) for v in xt])


def _write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _coord_rows(p: int, *columns):
    rows = []
    for i in range(len(columns[0])):
        t, j = divmod(i, p)
        rows.append([t + 1, j + 1] + [repr(float(c[i])) for c in columns])
    return rows


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _simulated_covariates(kind: str, n: int, p: int, rng) -> np.ndarray:
    if kind == "binary":
        extra = rng.integers(0, 2, size=(n, p - 1)).astype(float)
    else:
        extra = rng.standard_normal((n, p - 1))
    return np.column_stack([np.ones(n), extra])


def _dims(cfg: RunConfig, n: int | None, p: int | None) -> tuple[int, int]:
    spec = cfg.model
    for name, given, found in (("n", spec.n, n), ("p", spec.p, p)):
        if given is not None and found is not None and given != found:
            raise ConfigError(f"dimension mismatch: model.{name}={given} but data has {name}={found}")
    n = n if n is not None else spec.n
    p = p if p is not None else spec.p
    if n is None or p is None:
        raise ConfigError("model.n and model.p are required when simulating")
    return n, p


def _make_model(cfg: RunConfig, X: np.ndarray, y=None) -> DynamicProbitModel:
    n, p = X.shape
    P0 = np.asarray(cfg.model.P0, dtype=float)
    if P0.ndim == 0:
        P0 = float(P0) * np.eye(p)
    return DynamicProbitModel(X=X, G=expand_matrix("G", cfg.model.G, n, p),
                              W=expand_matrix("W", cfg.model.W, n, p), P0=P0, y=y)


def build_model(cfg: RunConfig) -> tuple[DynamicProbitModel, np.ndarray | None]:
    """Model with responses from the configured data source (and true states if simulated)."""
    if cfg.data is None:
        raise ConfigError("config has no 'data' section")
    if cfg.data.csv is not None:
        path = cfg.csv_path()
        if not path.exists():
            raise ConfigError(f"data file not found: {path}")
        y, X = load_csv(path)
        _dims(cfg, *X.shape)
        return _make_model(cfg, X, y), None
    sim = cfg.data.simulate
    n, p = _dims(cfg, None, None)
    rng = np.random.default_rng(sim.seed)
    X = _simulated_covariates(sim.covariates, n, p, rng)
    model = _make_model(cfg, X)
    states, y = simulate(model, rng)
    return model.with_responses(y), states


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    if not out.is_absolute():
        out = cfg.base_dir / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit(cfg: RunConfig, model, omega, out: Path) -> tuple[GaussianApprox, dict]:
    start = time.perf_counter()
    approx = ep_smooth(omega, model, cfg.ep)
    wall = time.perf_counter() - start
    _write_table(out / "moments.csv", ["t", "j", "mean", "var"],
                 _coord_rows(model.p, approx.mean, approx.var))
    if cfg.output.covariance:
        np.save(out / "covariance.npy", approx.cov)
    meta = {"variant": approx.variant, "n": model.n, "p": model.p, "sweeps": approx.sweeps,
            "converged": approx.converged, "skips": approx.skips, "wall_time": wall,
            "ep": asdict(cfg.ep)}
    _write_json(out / "meta.json", meta)
    return approx, meta


def _benchmark(cfg: RunConfig, model, omega, out: Path) -> tuple[np.ndarray, np.ndarray, dict]:
    oc = cfg.oracle
    start = time.perf_counter()
    if oc.method == "quadrature":
        q = quadrature_posterior_moments(omega, model)
        mean, var, se = q.mean, q.var, np.zeros_like(q.mean)
        info = {"method": "quadrature", "nodes": q.nodes}
    else:
        params = sun_smoothing_params(omega, model)
        draws = sample_smoothing_iid(params, oc.draws, oc.seed, oc.method, oc.burn_in)
        mm = mc_moments(draws)
        mean, var, se = mm.mean, mm.var, mm.se_mean
        info = {"method": oc.method, "draws": oc.draws, "burn_in": oc.burn_in, "seed": oc.seed,
                "u0_jitter": draws.u0_jitter, "max_tau_int": float(mm.tau_int.max())}
        if cfg.output.draws:
            np.save(out / "draws.npy", draws.draws)
    info["wall_time"] = time.perf_counter() - start
    _write_table(out / "sample_moments.csv", ["t", "j", "mean", "var", "se_mean"],
                 _coord_rows(model.p, mean, var, se))
    return mean, var, info


def cmd_simulate(cfg: RunConfig) -> int:
    model, states = build_model(cfg)
    out = _outdir(cfg)
    write_csv(out / "data.csv", model.y, model.X)
    if states is not None:
        _write_table(out / "states.csv", ["t", "j", "theta"], _coord_rows(model.p, states.ravel()))
    _write_json(out / "meta.json", {"n": model.n, "p": model.p,
                                    "mean_y": float(model.y.mean())})
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    model, _ = build_model(cfg)
    approx, _ = _fit(cfg, model, build_prior_covariance(model), _outdir(cfg))
    return EXIT_OK if approx.converged else EXIT_NOT_CONVERGED


def cmd_sample(cfg: RunConfig) -> int:
    model, _ = build_model(cfg)
    out = _outdir(cfg)
    _, _, info = _benchmark(cfg, model, build_prior_covariance(model), out)
    _write_json(out / "sample_meta.json", info)
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    model, _ = build_model(cfg)
    out = _outdir(cfg)
    omega = build_prior_covariance(model)
    approx, meta = _fit(cfg, model, omega, out)
    mean, var, info = _benchmark(cfg, model, omega, out)
    cmp = diagnostics.compare_moments(approx, mean, var)
    report = cmp.to_dict()
    worst = float(cmp.median_abs_mean_diff().max())
    report.update({"gate": cfg.compare.gate, "within_gate": worst < cfg.compare.gate,
                   "ep": meta, "benchmark": info})
    _write_json(out / "comparison.json", report)
    _write_table(out / "comparison.csv", ["t", "j", "mean_diff", "log_sd_diff"],
                 _coord_rows(model.p, cmp.mean_diff, cmp.log_sd_diff))
    return EXIT_OK if approx.converged else EXIT_NOT_CONVERGED


def cmd_bench(cfg: RunConfig) -> int:
    grid = [tuple(int(v) for v in cell) for cell in cfg.bench.grid]
    report = diagnostics.scaling_benchmark(grid, cfg.ep, cfg.bench.seed, cfg.bench.repeats)
    out = _outdir(cfg)
    data = report.to_dict()
    _write_json(out / "timing.json", data)
    rows = data["cells"]
    _write_table(out / "timing.csv", list(rows[0]), [list(r.values()) for r in rows])
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "sample": cmd_sample,
            "compare": cmd_compare, "bench": cmd_bench}

# flag -> (section, field, type)
OVERRIDES = {
    "tol": ("ep", "tol", float),
    "max_sweeps": ("ep", "max_sweeps", int),
    "damping": ("ep", "damping", float),
    "skip_delta": ("ep", "skip_delta", float),
    "variant": ("ep", "variant", str),
    "method": ("oracle", "method", str),
    "draws": ("oracle", "draws", int),
    "burn_in": ("oracle", "burn_in", int),
    "oracle_seed": ("oracle", "seed", int),
    "gate": ("compare", "gate", float),
    "out": ("output", "dir", str),
    "repeats": ("bench", "repeats", int),
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynprobit", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="JSON run configuration")
    for name, (_, _, typ) in OVERRIDES.items():
        ap.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    ap.add_argument("--seed", type=int, default=None, help="seed for data.simulate")
    ap.add_argument("--covariance", action="store_true", default=None,
                    help="also write the full covariance as covariance.npy")
    return ap


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    sections = {}
    for name, (section, key, _) in OVERRIDES.items():
        value = getattr(args, name, None)
        if value is not None:
            sections.setdefault(section, {})[key] = value
    try:
        for section, values in sections.items():
            setattr(cfg, section, replace(getattr(cfg, section), **values))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.covariance:
        cfg.output = replace(cfg.output, covariance=True)
    if args.seed is not None:
        if cfg.data is None or cfg.data.simulate is None:
            raise ConfigError("--seed only applies to data.simulate")
        cfg.data.simulate = replace(cfg.data.simulate, seed=args.seed)
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DYNPROBIT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError, ModelError, EpError, SamplerError, ValueError,
            RuntimeError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        site = getattr(exc, "site", None)
        if site is not None:
            err["site"] = site
        print(json.dumps(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
