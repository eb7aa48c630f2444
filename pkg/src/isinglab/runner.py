"""Experiment execution: dispatch, worker seeding, CSV/JSON artifacts.

Every run writes `data.csv` (one observable per row, fixed column order),
`summary.json`, and `manifest.json` (config hash, tool version, timestamps,
checksums of the data files).  Overlap experiments additionally write
`bounds.csv` with the closed-form upper bound per coupling, which the
plotting component overlays.

All randomness flows from the single config seed: chain or task i uses
seed XOR hash(i).  Re-running the same config and seed reproduces the data
files byte for byte (the manifest records their checksums).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import ExperimentConfig, kernel_from_spec
from .continuum import (IsingParams, alpha_from_lambda, estimate_rho_ratio,
                        estimate_rho_series, overlap_upper_bound, run_chain)
from .estimates import Estimate, estimate_from_series, pool_batch_series
from .kernels import Kernel, mode_kernel
from .percolation import (appendix_convergence_experiment, continuum_two_point,
                          long_range_order_scan)
from .rngtools import split_seed

CSV_COLUMNS = ("experiment", "observable", "kernel_id", "alpha", "lambda",
               "T", "N", "t", "mean", "stderr", "n", "tau_int", "seed")

WORKER_ENV_VAR = "ISINGLAB_MAX_WORKERS"


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _row(experiment, observable, kernel_id="", alpha=None, lam=None, T=None,
         N=None, t=None, mean=None, stderr=None, n=None, tau_int=None,
         seed=None) -> dict:
    return {"experiment": experiment, "observable": observable,
            "kernel_id": kernel_id, "alpha": alpha, "lambda": lam, "T": T,
            "N": N, "t": t, "mean": mean, "stderr": stderr, "n": n,
            "tau_int": tau_int, "seed": seed}


def _estimate_row(experiment, observable, est: Estimate, kernel_id="",
                  alpha=None, lam=None, T=None, N=None, t=None,
                  seed=None) -> dict:
    return _row(experiment, observable, kernel_id, alpha, lam, T, N, t,
                est.mean, est.stderr, est.n_samples,
                est.autocorrelation_time, seed)


def effective_workers(requested: int) -> int:
    cap = os.environ.get(WORKER_ENV_VAR)
    if cap is not None:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def _chain_values_task(args):
    """Worker body: run one chain, return the raw measurement arrays."""
    (kernel_spec, alpha, horizon, points, sweeps, burn_in, seed,
     want_mag) = args
    params = IsingParams(alpha, horizon, kernel_from_spec(kernel_spec))
    sample = run_chain(params, sweeps, burn_in, seed, points=points,
                       want_magnetization=want_mag)
    return sample.values, sample.x0, sample.magnetization


def _run_chains(config: ExperimentConfig, points, want_mag: bool):
    p = config.params
    chains = p.get("chains", 1)
    seeds = [split_seed(config.seed, i) for i in range(chains)]
    tasks = [(config.kernel_spec, p["alpha"], p["horizon"], tuple(points),
              p["sweeps"], p["burn_in"], s, want_mag) for s in seeds]
    workers = effective_workers(min(config.workers, chains))
    if workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_values_task, tasks))
    else:
        results = [_chain_values_task(t) for t in tasks]
    return results


def _run_correlation(config: ExperimentConfig):
    p = config.params
    points = p["points"]
    results = _run_chains(config, points, want_mag=False)
    rows = []
    summary = {}
    for col, t in enumerate(points):
        series_list = []
        for values, x0, _ in results:
            series = values[:, col].astype(np.int64) * x0
            series_list.append(series.astype(float))
        if len(series_list) == 1:
            est = estimate_from_series(series_list[0], config.seed)
        else:
            est = pool_batch_series(series_list, config.seed)
        rows.append(_estimate_row("correlation", "correlation", est,
                                  config.kernel.id_string(), p["alpha"],
                                  p.get("lambda"), p["horizon"], None, t,
                                  config.seed))
        summary[f"t={t:g}"] = {"mean": est.mean, "stderr": est.stderr}
    return rows, summary, {}


def _run_susceptibility(config: ExperimentConfig):
    p = config.params
    results = _run_chains(config, (), want_mag=True)
    series_list = [mag**2 / p["horizon"] for _, _, mag in results]
    if len(series_list) == 1:
        est = estimate_from_series(series_list[0], config.seed)
    else:
        est = pool_batch_series(series_list, config.seed)
    row = _estimate_row("susceptibility", "susceptibility", est,
                        config.kernel.id_string(), p["alpha"],
                        p.get("lambda"), p["horizon"], None, None,
                        config.seed)
    return [row], {"mean": est.mean, "stderr": est.stderr}, {}


def _run_rho_ratio(config: ExperimentConfig):
    p = config.params
    rows, bounds, summary = [], [], {}
    kid = config.kernel.id_string()
    for i, lam in enumerate(p["lambdas"]):
        result = estimate_rho_ratio(lam, config.kernel, p["horizons"],
                                    p["sweeps"], p["burn_in"],
                                    split_seed(config.seed, 500 + i))
        for T, est in zip(result.horizons, result.estimates):
            rows.append(_estimate_row("rho_ratio", "rho_ratio", est, kid,
                                      alpha_from_lambda(lam), lam, T, None,
                                      None, config.seed))
        rows.append(_estimate_row("rho_ratio", "rho_plateau", result.plateau,
                                  kid, alpha_from_lambda(lam), lam, None,
                                  None, None, config.seed))
        bounds.append((lam, overlap_upper_bound(lam, config.kernel)))
        summary[f"lambda={lam:g}"] = {
            "plateau": result.plateau.mean,
            "plateau_stderr": result.plateau.stderr,
            "converged": result.converged, "note": result.note}
    return rows, summary, {"bounds.csv": _bounds_csv(bounds)}


def _run_rho_series(config: ExperimentConfig):
    p = config.params
    lam = p["lambda"]
    result = estimate_rho_series(lam, config.kernel, p["n_max"], p["t_max"],
                                 p["nodes"], p["sweeps"], p["burn_in"],
                                 split_seed(config.seed, 900))
    kid = config.kernel.id_string()
    rows = []
    for term in result.terms:
        rows.append(_row("rho_series", "series_term", kid,
                         alpha_from_lambda(lam), lam, p["t_max"], term.order,
                         None, term.value, term.stderr, p["nodes"], None,
                         config.seed))
    rows.append(_row("rho_series", "rho_upper", kid, alpha_from_lambda(lam),
                     lam, p["t_max"], None, None, result.rho_upper,
                     result.rho_upper_stderr, p["nodes"], None, config.seed))
    summary = {"total": result.total, "rho_upper": result.rho_upper,
               "n1_label": result.n1_label, "n1_divergent": result.n1_divergent,
               "tau_floor": result.tau_floor, "flags": list(result.flags)}
    return rows, summary, {}


def _run_percolation_two_point(config: ExperimentConfig):
    p = config.params
    est = continuum_two_point(p["alpha"], p["horizon"], config.kernel,
                              p["x"], p["y"], p["samples"],
                              split_seed(config.seed, 0))
    row = _estimate_row("percolation_two_point", "continuum_two_point", est,
                        config.kernel.id_string(), p["alpha"],
                        p.get("lambda"), p["horizon"], None,
                        abs(p["y"] - p["x"]), config.seed)
    return [row], {"mean": est.mean, "stderr": est.stderr}, {}


def _run_lro_scan(config: ExperimentConfig):
    p = config.params
    report = long_range_order_scan(config.kernel, p["alphas"], p["t_grid"],
                                   p["horizon"], p["sweeps"], p["burn_in"],
                                   p["samples"], config.seed)
    kid = config.kernel.id_string()
    rows = []
    for res in report.results:
        for pt in res.points:
            rows.append(_estimate_row("lro_scan", "tau", pt.correlation, kid,
                                      res.alpha, None, p["horizon"], None,
                                      pt.t, config.seed))
            rows.append(_estimate_row("lro_scan", "percolation_bound",
                                      pt.percolation_bound, kid, res.alpha,
                                      None, p["horizon"], None, pt.t,
                                      config.seed))
    summary = {"scan": report.summaries(),
               "crossover_window": list(report.crossover_window),
               "n1": [{"alpha": r.alpha, "label": r.n1_label,
                       "divergent": r.n1_divergent} for r in report.results],
               "note": report.note}
    return rows, summary, {}


def _run_appendix_convergence(config: ExperimentConfig):
    p = config.params
    rows_out = appendix_convergence_experiment(
        p["alpha"], p["horizon"], config.kernel, p["n"], p["grid_factors"],
        p["samples"], config.seed)
    kid = config.kernel.id_string()
    rows = []
    gaps = []
    for r in rows_out:
        rows.append(_estimate_row("appendix_convergence",
                                  "discrete_two_point", r.discrete, kid,
                                  p["alpha"], p.get("lambda"), p["horizon"],
                                  r.grid_factor, p["n"], config.seed))
        rows.append(_row("appendix_convergence", "gap", kid, p["alpha"],
                         p.get("lambda"), p["horizon"], r.grid_factor,
                         p["n"], r.gap, r.combined_stderr, None, None,
                         config.seed))
        gaps.append({"N": r.grid_factor, "gap": r.gap,
                     "stderr": r.combined_stderr})
    cont = rows_out[0].continuum
    rows.append(_estimate_row("appendix_convergence", "continuum_two_point",
                              cont, kid, p["alpha"], p.get("lambda"),
                              p["horizon"], None, p["n"], config.seed))
    return rows, {"gaps": gaps, "continuum": cont.mean}, {}


def _run_fock_validate(config: ExperimentConfig):
    from .fock import TruncatedModel, decompose
    p = config.params
    weights = [v * v for _, v in p["modes"]]
    freqs = [w for w, _ in p["modes"]]
    matching = mode_kernel(weights, freqs)
    kid = matching.id_string()
    rows, bounds = [], []
    summary = {}
    for lam in p["lambdas"]:
        for n_max in p["n_max_list"]:
            model = TruncatedModel.create(p["modes"], n_max, lam)
            res = decompose(model)
            common = dict(kernel_id=kid, alpha=alpha_from_lambda(lam),
                          lam=lam, N=n_max, seed=config.seed)
            rows.append(_row("fock_validate", "ground_energy",
                             mean=res.ground_energy, stderr=0.0, **common))
            rows.append(_row("fock_validate", "vacuum_overlap",
                             mean=res.vacuum_overlap, stderr=0.0, **common))
            rows.append(_row("fock_validate", "gap", mean=res.gap,
                             stderr=0.0, **common))
            summary[f"lambda={lam:g},n_max={n_max}"] = {
                "E": res.ground_energy, "rho": res.vacuum_overlap,
                "gap": res.gap}
        bounds.append((lam, overlap_upper_bound(lam, matching)))
    return rows, summary, {"bounds.csv": _bounds_csv(bounds)}


def _run_fk_identity(config: ExperimentConfig):
    from .discrete import LatticeModel, exact_correlation, exact_fk_two_point
    rng = np.random.default_rng(split_seed(config.seed, 3))
    rows = []
    max_diff = 0.0
    for _ in range(config.params["n_triples"]):
        n_intervals = int(rng.integers(2, 5))
        horizon = float(rng.uniform(0.6, 0.95)) * n_intervals / 2.0
        alpha = float(rng.uniform(0.05, 1.2))
        n_modes = int(rng.integers(1, 3))
        kernel = mode_kernel(list(rng.uniform(0.3, 1.5, n_modes)),
                             list(rng.uniform(0.5, 2.0, n_modes)))
        model = LatticeModel(horizon, n_intervals, alpha, kernel)
        spin = exact_correlation(model, [0.0, horizon])
        cluster = exact_fk_two_point(model, [0.0, horizon])
        diff = abs(spin - cluster)
        max_diff = max(max_diff, diff)
        rows.append(_row("fk_identity", "fk_abs_diff", kernel.id_string(),
                         alpha, None, horizon, n_intervals, None, diff, 0.0,
                         None, None, config.seed))
    return rows, {"max_abs_diff": max_diff}, {}


def _run_discrete(config: ExperimentConfig):
    from .discrete import (ENUM_MAX_SITES, LatticeModel, exact_correlation,
                           mcmc_correlation)
    p = config.params
    kid = config.kernel.id_string()
    rows = []
    summary = {}
    for k, n_grid in enumerate(p["n_list"]):
        model = LatticeModel(p["horizon"], n_grid, p["alpha"], config.kernel)
        if model.n_sites <= ENUM_MAX_SITES:
            value = exact_correlation(model, p["sites"])
            est = Estimate(mean=value, stderr=0.0, n_samples=1,
                           autocorrelation_time=1.0, seed=config.seed)
        else:
            est = mcmc_correlation(model, p["sites"], p["sweeps"],
                                   split_seed(config.seed, 300 + k))
        rows.append(_estimate_row(
            "discrete", "correlation", est, kid, p["alpha"],
            p.get("lambda"), p["horizon"], n_grid,
            p["sites"][-1] if p["sites"] else None, config.seed))
        summary[f"N={n_grid}"] = {"mean": est.mean, "stderr": est.stderr,
                                  "delta": model.delta}
    return rows, summary, {}


_DISPATCH = {
    "correlation": _run_correlation,
    "discrete": _run_discrete,
    "susceptibility": _run_susceptibility,
    "rho_ratio": _run_rho_ratio,
    "rho_series": _run_rho_series,
    "percolation_two_point": _run_percolation_two_point,
    "lro_scan": _run_lro_scan,
    "appendix_convergence": _run_appendix_convergence,
    "fock_validate": _run_fock_validate,
    "fk_identity": _run_fk_identity,
}


def _bounds_csv(bounds: list[tuple[float, float]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["lambda", "bound"])
    for lam, bound in bounds:
        writer.writerow([_fmt(float(lam)), _fmt(float(bound))])
    return out.getvalue()


def rows_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
    return out.getvalue()


def run_experiment(config: ExperimentConfig) -> dict[str, str]:
    """Execute the configured experiment; returns {filename: path} written."""
    started = datetime.now(timezone.utc).isoformat()
    rows, summary, extra = _DISPATCH[config.kind](config)
    os.makedirs(config.output_dir, exist_ok=True)
    files: dict[str, str] = {}
    contents: dict[str, str] = {"data.csv": rows_to_csv(rows)}
    contents["summary.json"] = json.dumps(
        {"experiment": config.kind, "seed": config.seed, "summary": summary},
        indent=2, sort_keys=True, allow_nan=True) + "\n"
    contents.update(extra)
    checksums = {}
    for name, text in contents.items():
        path = os.path.join(config.output_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        checksums[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        files[name] = path
    manifest = {
        "schema_version": config.schema_version,
        "tool_version": __version__,
        "config_hash": config.config_hash(),
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": checksums,
    }
    path = os.path.join(config.output_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["manifest.json"] = path
    return files
