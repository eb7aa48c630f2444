"""Render isinglab CSV artifacts into figures.

Figures read only the documented CSV schema and plot the values verbatim
(no recomputation, no silent transformation beyond documented log axes).
Every renderer returns the arrays it handed to matplotlib so tests can
assert fidelity on the data rather than on pixels.  Error bars are drawn
whenever the stderr column is nonempty.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("tau_decay", "rho_vs_lambda", "convergence", "lro_scan")


class FigureDataError(ValueError):
    """Input CSV missing, empty, or lacking a required column."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    output_path: str
    bounds_path: str | None = None
    log_y: bool = False
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureDataError(
                f"unknown figure kind {self.kind!r}; choose from "
                f"{', '.join(FIGURE_KINDS)}")


@dataclass
class RenderResult:
    """Figure file path plus the exact arrays that were plotted."""

    output_path: str
    series: dict = field(default_factory=dict)


def _read_rows(path: str, required: tuple[str, ...]) -> list[dict]:
    if not os.path.exists(path):
        raise FigureDataError(f"input CSV not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        for column in required:
            if column not in header:
                raise FigureDataError(
                    f"{path}: missing required column {column!r}")
        rows = list(reader)
    if not rows:
        raise FigureDataError(f"{path}: no data rows")
    return rows


def _floats(rows: list[dict], column: str) -> np.ndarray:
    return np.array([float(r[column]) for r in rows])


def _maybe_errors(rows: list[dict]) -> np.ndarray | None:
    if all(r.get("stderr", "") != "" for r in rows):
        return _floats(rows, "stderr")
    return None


def _new_axes(title: str | None):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="png")
    plt.close(fig)


def _group_by(rows: list[dict], key: str) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row)
    return groups


def render_tau_decay(spec: FigureSpec) -> RenderResult:
    """Correlation decay curves over t, one series per coupling."""
    rows = _read_rows(spec.csv_path, ("observable", "alpha", "t", "mean"))
    rows = [r for r in rows if r["observable"] in ("correlation", "tau")]
    if not rows:
        raise FigureDataError(
            f"{spec.csv_path}: no correlation/tau rows to plot")
    fig, ax = _new_axes(spec.title)
    result = RenderResult(spec.output_path)
    for alpha, group in sorted(_group_by(rows, "alpha").items(),
                               key=lambda kv: float(kv[0] or "nan")):
        group = sorted(group, key=lambda r: float(r["t"]))
        x = _floats(group, "t")
        y = _floats(group, "mean")
        yerr = _maybe_errors(group)
        label = f"alpha={alpha}" if alpha else "unspecified coupling"
        if yerr is None:
            ax.plot(x, y, "o-", label=label)
        else:
            ax.errorbar(x, y, yerr=yerr, fmt="o-", capsize=3, label=label)
        result.series[label] = {"t": x, "mean": y, "stderr": yerr}
    ax.set_xlabel("t")
    ax.set_ylabel("two-point value")
    if spec.log_y:
        ax.set_yscale("log")
    ax.legend()
    _save(fig, spec.output_path)
    return result


def render_rho_vs_lambda(spec: FigureSpec) -> RenderResult:
    """Overlap estimates vs coupling strength with the bound overlay."""
    rows = _read_rows(spec.csv_path, ("observable", "lambda", "mean"))
    rows = [r for r in rows
            if r["observable"] in ("rho_plateau", "vacuum_overlap")]
    if not rows:
        raise FigureDataError(
            f"{spec.csv_path}: no overlap rows (rho_plateau or "
            "vacuum_overlap) to plot")
    rows = sorted(rows, key=lambda r: float(r["lambda"]))
    x = _floats(rows, "lambda")
    y = _floats(rows, "mean")
    yerr = _maybe_errors(rows)
    fig, ax = _new_axes(spec.title)
    result = RenderResult(spec.output_path)
    if yerr is None or not np.any(yerr):
        ax.plot(x, y, "o", label="overlap")
    else:
        ax.errorbar(x, y, yerr=yerr, fmt="o", capsize=3, label="overlap")
    result.series["overlap"] = {"lambda": x, "mean": y, "stderr": yerr}
    if spec.bounds_path is not None:
        bound_rows = sorted(_read_rows(spec.bounds_path,
                                       ("lambda", "bound")),
                            key=lambda r: float(r["lambda"]))
        bx = _floats(bound_rows, "lambda")
        by = _floats(bound_rows, "bound")
        ax.plot(bx, by, "--", label="upper bound")
        result.series["bound"] = {"lambda": bx, "bound": by}
    ax.set_xlabel("lambda")
    ax.set_ylabel("vacuum overlap")
    if spec.log_y:
        ax.set_yscale("log")
    ax.legend()
    _save(fig, spec.output_path)
    return result


def render_convergence(spec: FigureSpec) -> RenderResult:
    """Gap between lattice and continuum two-point values per refinement."""
    rows = _read_rows(spec.csv_path, ("observable", "N", "mean"))
    rows = [r for r in rows if r["observable"] == "gap"]
    if not rows:
        raise FigureDataError(f"{spec.csv_path}: no gap rows to plot")
    rows = sorted(rows, key=lambda r: float(r["N"]))
    x = _floats(rows, "N")
    y = _floats(rows, "mean")
    yerr = _maybe_errors(rows)
    fig, ax = _new_axes(spec.title)
    if yerr is None or not np.any(yerr):
        ax.plot(x, y, "s-", label="|lattice - continuum|")
    else:
        ax.errorbar(x, y, yerr=yerr, fmt="s-", capsize=3,
                    label="|lattice - continuum|")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid refinement N")
    ax.set_ylabel("two-point gap")
    if spec.log_y:
        ax.set_yscale("log")
    ax.legend()
    _save(fig, spec.output_path)
    return RenderResult(spec.output_path,
                        {"gap": {"N": x, "mean": y, "stderr": yerr}})


def render_lro_scan(spec: FigureSpec) -> RenderResult:
    """Decay curves per coupling with their percolation lower bounds."""
    rows = _read_rows(spec.csv_path, ("observable", "alpha", "t", "mean"))
    tau_rows = [r for r in rows if r["observable"] == "tau"]
    bound_rows = [r for r in rows if r["observable"] == "percolation_bound"]
    if not tau_rows:
        raise FigureDataError(f"{spec.csv_path}: no tau rows to plot")
    fig, ax = _new_axes(spec.title)
    result = RenderResult(spec.output_path)
    for alpha, group in sorted(_group_by(tau_rows, "alpha").items(),
                               key=lambda kv: float(kv[0])):
        group = sorted(group, key=lambda r: float(r["t"]))
        x = _floats(group, "t")
        y = _floats(group, "mean")
        yerr = _maybe_errors(group)
        if yerr is None:
            ax.plot(x, y, "o-", label=f"alpha={alpha}")
        else:
            ax.errorbar(x, y, yerr=yerr, fmt="o-", capsize=3,
                        label=f"alpha={alpha}")
        result.series[f"tau:alpha={alpha}"] = {"t": x, "mean": y,
                                               "stderr": yerr}
    for alpha, group in sorted(_group_by(bound_rows, "alpha").items(),
                               key=lambda kv: float(kv[0])):
        group = sorted(group, key=lambda r: float(r["t"]))
        x = _floats(group, "t")
        y = _floats(group, "mean")
        ax.plot(x, y, ":", alpha=0.7)
        result.series[f"bound:alpha={alpha}"] = {"t": x, "mean": y}
    ax.set_xlabel("t")
    ax.set_ylabel("two-point value")
    if spec.log_y:
        ax.set_yscale("log")
    ax.legend()
    _save(fig, spec.output_path)
    return result


_RENDERERS = {
    "tau_decay": render_tau_decay,
    "rho_vs_lambda": render_rho_vs_lambda,
    "convergence": render_convergence,
    "lro_scan": render_lro_scan,
}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; raises FigureDataError before any file is
    written when the input does not match the schema."""
    return _RENDERERS[spec.kind](spec)
