"""Experiment configuration: INI-style sections with explicit numeric types.

A config file has a [meta] section (schema_version), an [experiment]
section (kind, seed, output_dir, workers), a [kernel] section, and one
section named after the experiment kind.  The coupling may be given either
as `alpha` or as `lambda` (then alpha = lambda^2 / 8); giving both is an
error.  The seed is mandatory: no entropy is drawn from the clock.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .continuum import alpha_from_lambda
from .kernels import (Kernel, KernelValidationError, mode_kernel, poly_kernel,
                      power_law_kernel)

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "correlation", "rho_ratio", "rho_series", "susceptibility",
    "percolation_two_point", "lro_scan", "appendix_convergence",
    "fock_validate", "fk_identity", "discrete",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    out = []
    for tok in raw.replace(",", " ").split():
        val = float(tok)
        if val != int(val):
            raise ValueError(f"expected integer, got {tok}")
        out.append(int(val))
    return out


class _Section:
    """Typed access to one config section with error attribution."""

    def __init__(self, name: str, items: dict[str, str]):
        self.name = name
        self.items = dict(items)
        self.used: set[str] = set()

    def _raw(self, key: str, default=None, required: bool = False):
        if key in self.items:
            self.used.add(key)
            return self.items[key]
        if required:
            raise ConfigError(f"missing required field [{self.name}] {key}")
        return default

    def has(self, key: str) -> bool:
        return key in self.items

    def get_float(self, key, default=None, required=False):
        raw = self._raw(key, required=required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be a number, "
                              f"got {raw!r}") from None

    def get_int(self, key, default=None, required=False):
        raw = self._raw(key, required=required)
        if raw is None:
            return default
        try:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be an integer, "
                              f"got {raw!r}") from None

    def get_str(self, key, default=None, required=False):
        raw = self._raw(key, required=required)
        return default if raw is None else raw.strip()

    def get_floats(self, key, default=None, required=False):
        raw = self._raw(key, required=required)
        if raw is None:
            return default
        try:
            return _floats(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be a list of "
                              f"numbers, got {raw!r}") from None

    def get_ints(self, key, default=None, required=False):
        raw = self._raw(key, required=required)
        if raw is None:
            return default
        try:
            return _ints(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be a list of "
                              f"integers, got {raw!r}") from None


def _coupling(section: _Section, required: bool = True) -> tuple[float, float | None]:
    """Resolve (alpha, lambda) from a section; exactly one may be given."""
    has_alpha = section.has("alpha")
    has_lambda = section.has("lambda")
    if has_alpha and has_lambda:
        raise ConfigError(
            f"[{section.name}] sets both alpha and lambda; they are "
            "redundant (alpha = lambda^2 / 8), give exactly one")
    if has_lambda:
        lam = section.get_float("lambda")
        return alpha_from_lambda(lam), lam
    if has_alpha:
        return section.get_float("alpha"), None
    if required:
        raise ConfigError(f"[{section.name}] needs alpha or lambda")
    return 0.0, None


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed and validated experiment description."""

    kind: str
    seed: int
    output_dir: str
    workers: int
    kernel: Kernel
    kernel_spec: dict
    params: dict
    schema_version: int = SCHEMA_VERSION
    raw_sections: dict = field(default_factory=dict, compare=False)

    def config_hash(self) -> str:
        return hash_sections(self.raw_sections)


def hash_sections(sections: dict[str, dict[str, str]]) -> str:
    canon = io.StringIO()
    for name in sorted(sections):
        for key in sorted(sections[name]):
            canon.write(f"{name}.{key}={sections[name][key].strip()}\n")
    return hashlib.sha256(canon.getvalue().encode("utf-8")).hexdigest()


def kernel_from_spec(spec: dict) -> Kernel:
    """Rebuild a kernel from its parsed spec dict (used by worker processes)."""
    if spec["type"] == "modes":
        return mode_kernel(spec["weights"], spec["freqs"])
    if spec["type"] == "poly":
        return poly_kernel(spec["amplitude"])
    if spec["type"] == "powerlaw":
        return power_law_kernel(spec["dim"], spec["delta"], spec["cutoff"])
    raise ConfigError(f"unknown kernel type {spec['type']!r}")


def parse_kernel(section: _Section) -> tuple[Kernel, dict]:
    ktype = section.get_str("type", required=True)
    try:
        if ktype == "modes":
            weights = section.get_floats("weights", required=True)
            freqs = section.get_floats("freqs", required=True)
            return mode_kernel(weights, freqs), {
                "type": "modes", "weights": weights, "freqs": freqs}
        if ktype == "poly":
            amp = section.get_float("amplitude", required=True)
            return poly_kernel(amp), {"type": "poly", "amplitude": amp}
        if ktype == "powerlaw":
            dim = section.get_int("dim", required=True)
            delta = section.get_float("delta", required=True)
            cutoff = section.get_float("cutoff", required=True)
            return power_law_kernel(dim, delta, cutoff), {
                "type": "powerlaw", "dim": dim, "delta": delta,
                "cutoff": cutoff}
    except KernelValidationError as exc:
        raise ConfigError(f"[kernel] invalid spectral data: {exc}") from exc
    raise ConfigError(f"[kernel] type must be one of modes, powerlaw, poly; "
                      f"got {ktype!r}")


def _parse_kind_params(kind: str, sec: _Section) -> dict:
    if kind == "correlation":
        alpha, lam = _coupling(sec)
        return {"alpha": alpha, "lambda": lam,
                "horizon": sec.get_float("horizon", required=True),
                "points": sec.get_floats("points", required=True),
                "sweeps": sec.get_int("sweeps", required=True),
                "burn_in": sec.get_int("burn_in", required=True),
                "chains": sec.get_int("chains", 1)}
    if kind == "susceptibility":
        alpha, lam = _coupling(sec)
        return {"alpha": alpha, "lambda": lam,
                "horizon": sec.get_float("horizon", required=True),
                "sweeps": sec.get_int("sweeps", required=True),
                "burn_in": sec.get_int("burn_in", required=True),
                "chains": sec.get_int("chains", 1)}
    if kind == "rho_ratio":
        lams = sec.get_floats("lambdas") if sec.has("lambdas") else \
            [sec.get_float("lambda", required=True)]
        return {"lambdas": lams,
                "horizons": sec.get_floats("horizons", required=True),
                "sweeps": sec.get_int("sweeps", required=True),
                "burn_in": sec.get_int("burn_in", required=True)}
    if kind == "rho_series":
        return {"lambda": sec.get_float("lambda", required=True),
                "n_max": sec.get_int("n_max", 2),
                "t_max": sec.get_float("t_max", required=True),
                "nodes": sec.get_int("nodes", 256),
                "sweeps": sec.get_int("sweeps", required=True),
                "burn_in": sec.get_int("burn_in", required=True)}
    if kind == "percolation_two_point":
        alpha, lam = _coupling(sec)
        return {"alpha": alpha, "lambda": lam,
                "horizon": sec.get_float("horizon", required=True),
                "x": sec.get_float("x", 0.0),
                "y": sec.get_float("y", required=True),
                "samples": sec.get_int("samples", required=True)}
    if kind == "lro_scan":
        return {"alphas": sec.get_floats("alphas", required=True),
                "t_grid": sec.get_floats("t_grid", required=True),
                "horizon": sec.get_float("horizon", required=True),
                "sweeps": sec.get_int("sweeps", required=True),
                "burn_in": sec.get_int("burn_in", required=True),
                "samples": sec.get_int("samples", 4000)}
    if kind == "appendix_convergence":
        alpha, lam = _coupling(sec)
        return {"alpha": alpha, "lambda": lam,
                "horizon": sec.get_int("horizon", required=True),
                "n": sec.get_int("n", required=True),
                "grid_factors": sec.get_ints("grid_factors", required=True),
                "samples": sec.get_int("samples", required=True)}
    if kind == "fock_validate":
        modes_raw = sec.get_str("modes", required=True)
        modes = []
        try:
            for tok in modes_raw.split(","):
                w, v = tok.split(":")
                modes.append((float(w), float(v)))
        except ValueError:
            raise ConfigError(
                f"[{sec.name}] modes must look like 'omega:v, omega:v', "
                f"got {modes_raw!r}") from None
        lams = sec.get_floats("lambdas") if sec.has("lambdas") else \
            [sec.get_float("lambda", required=True)]
        n_max_list = sec.get_ints("n_max_list") if sec.has("n_max_list") \
            else [sec.get_int("n_max", required=True)]
        return {"modes": modes, "lambdas": lams, "n_max_list": n_max_list}
    if kind == "fk_identity":
        return {"n_triples": sec.get_int("n_triples", 10)}
    if kind == "discrete":
        alpha, lam = _coupling(sec)
        n_list = sec.get_ints("n_list") if sec.has("n_list") else \
            [sec.get_int("n", required=True)]
        return {"alpha": alpha, "lambda": lam,
                "horizon": sec.get_float("horizon", required=True),
                "n_list": n_list,
                "sites": sec.get_floats("sites", required=True),
                "sweeps": sec.get_int("sweeps", 20_000)}
    raise ConfigError(f"[experiment] kind must be one of "
                      f"{', '.join(EXPERIMENT_KINDS)}; got {kind!r}")


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    return parse_sections(sections)


def parse_sections(sections: dict[str, dict[str, str]]) -> ExperimentConfig:
    if "meta" in sections:
        meta = _Section("meta", sections["meta"])
        version = meta.get_int("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"[meta] schema_version {version} is not "
                              f"supported (expected {SCHEMA_VERSION})")
    if "experiment" not in sections:
        raise ConfigError("missing [experiment] section")
    exp = _Section("experiment", sections["experiment"])
    kind = exp.get_str("kind", required=True)
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"[experiment] kind must be one of "
                          f"{', '.join(EXPERIMENT_KINDS)}; got {kind!r}")
    seed = exp.get_int("seed", required=True)
    output_dir = exp.get_str("output_dir", "runs/" + kind)
    workers = exp.get_int("workers", 1)
    if workers < 1:
        raise ConfigError("[experiment] workers must be >= 1")
    needs_kernel = kind != "fock_validate" and kind != "fk_identity"
    if "kernel" in sections:
        kernel, kernel_spec = parse_kernel(_Section("kernel",
                                                    sections["kernel"]))
    elif needs_kernel:
        raise ConfigError("missing [kernel] section")
    else:
        kernel, kernel_spec = mode_kernel([1.0], [1.0]), {
            "type": "modes", "weights": [1.0], "freqs": [1.0]}
    if kind not in sections:
        raise ConfigError(f"missing [{kind}] section for the chosen kind")
    params = _parse_kind_params(kind, _Section(kind, sections[kind]))
    return ExperimentConfig(kind=kind, seed=seed, output_dir=output_dir,
                            workers=workers, kernel=kernel,
                            kernel_spec=kernel_spec, params=params,
                            raw_sections=sections)


def serialize_config(config: ExperimentConfig) -> str:
    """Round-trip serialization of the raw sections (INI text)."""
    parser = configparser.ConfigParser()
    for name, items in config.raw_sections.items():
        parser[name] = {k: v for k, v in items.items()}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
