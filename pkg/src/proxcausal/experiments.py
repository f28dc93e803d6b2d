"""Replication harness for the bias tables and the diagnostic scans.

Each replication draws its own RNG stream from ``(seed, run_index)``, so
results do not depend on how many worker threads execute them.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import dgp
from . import estimators as E
from .errors import ConfigError, InvalidSpec, ProxCausalError

log = logging.getLogger(__name__)

TABLE1 = "table1"
TABLE2 = "table2"
CONDITION_SCAN = "scan-condition"
VIOLATION_SCAN = "scan-violation"
STUDIES = (TABLE1, TABLE2, CONDITION_SCAN, VIOLATION_SCAN)

TABLE1_GRAPHS = (dgp.BASE, dgp.EXOTIC1, dgp.EXOTIC2, dgp.EXOTIC3)
# scenario -> (U->W,Z,X pattern, U->Y pattern); None marks the exotic2 row
TABLE2_SCENARIOS = {
    "exotic2_binary_x": None,
    "uv_const": ("const", "const"),
    "uv_linear": ("linear", "linear"),
    "uv_linear_uy_const": ("linear", "const"),
    "uv_const_uy_linear": ("const", "linear"),
    "uv_first_uy_const": ("first", "const"),
    "uv_const_uy_first": ("const", "first"),
}
COVARIATES = ("Z", "W")

DEFAULT_GRIDS = {
    "UW": tuple(round(0.1 * i, 1) for i in range(10)),
    "UZ": tuple(round(0.1 * i, 1) for i in range(10)),
    "UX": tuple(round(0.1 * i, 1) for i in range(9)),
    "ZX": tuple(round(0.1 * i, 1) for i in range(9)),
    "UY": tuple(round(0.1 * i, 1) for i in range(7)),
    "WY": tuple(round(0.1 * i, 1) for i in range(7)),
    "WX": tuple(round(0.1 * i, 1) for i in range(-6, 7)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    study: str = TABLE1
    overrides: dict = field(default_factory=dict)
    phi: float = 0.5
    n_per_run: int = 10 ** 5
    n_runs: int = 100
    seed: int = 0
    param: Optional[str] = None
    grid: tuple = ()
    cond_cutoff: float = E.COND_CUTOFF
    population: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError("study", f"unknown study {self.study!r}")
        if self.n_runs < 1:
            raise ConfigError("n_runs", "must be at least 1")
        if not self.population and self.n_per_run < 10 ** 4:
            raise ConfigError("n_per_run", "must be at least 10^4")
        if self.threads < 1:
            raise ConfigError("threads", "must be at least 1")
        for k in self.overrides:
            if k not in dgp.DEFAULT_DELTAS:
                raise ConfigError(f"[deltas] {k}", "unknown edge")
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if self.study == CONDITION_SCAN and self.param is None:
            object.__setattr__(self, "param", "UW")
        if self.study == VIOLATION_SCAN:
            object.__setattr__(self, "param", "WX")
        if self.study in (CONDITION_SCAN, VIOLATION_SCAN) and not self.grid:
            if self.param not in DEFAULT_GRIDS:
                raise ConfigError("grid", f"no default grid for {self.param!r}")
            object.__setattr__(self, "grid", DEFAULT_GRIDS[self.param])


@dataclass(frozen=True)
class SummaryStats:
    """Moments of the relative bias of one method over the included runs."""

    method: str
    mean: Optional[float]
    sd: Optional[float]
    n_runs: int
    n_omitted: int = 0  # gated or failed runs; n_included = n_runs - n_omitted
    n_failed: int = 0
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None

    @property
    def n_included(self) -> int:
        return self.n_runs - self.n_omitted


def summarize(runs: Sequence[Optional[float]], method: str = "", n_failed: int = 0,
              cis: Sequence[tuple] = ()) -> SummaryStats:
    """Mean and sample sd over non-None entries; None marks an omitted run."""
    values = [v for v in runs if v is not None]
    n_omitted = len(runs) - len(values)
    mean = float(np.mean(values)) if values else None
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else None
    lo = hi = None
    if cis:
        lo = float(np.mean([c[0] for c in cis]))
        hi = float(np.mean([c[1] for c in cis]))
    return SummaryStats(method, mean, sd, len(runs), n_omitted, n_failed, lo, hi)


@dataclass(frozen=True)
class ScanPoint:
    param: str
    value: float
    bias: dict  # method -> relative bias, absent proximal when omitted
    cond_number: float
    omitted: bool
    ci: dict = field(default_factory=dict)  # method -> (low, high)

    def __post_init__(self):
        if self.omitted and self.bias.get(E.PROXIMAL) is not None:
            raise ValueError("omitted points carry no proximal bias")


# --- single evaluations ---------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    proximal: Optional[float]  # relative bias
    regression: Optional[float]
    cond: float
    gated: bool
    failed: bool
    reg_ci: Optional[tuple] = None


def evaluate(spec: dgp.DgpSpec, data_or_model, truth: float, cond_cutoff: float) -> RunResult:
    """Proximal and regression relative bias on one dataset or exact model."""
    if isinstance(data_or_model, dgp.Dataset):
        model = E.fit(data_or_model)
    else:
        model = data_or_model
    prox, cond, failed = None, math.inf, False
    try:
        rep = E.proximal_g(model, cond_cutoff=cond_cutoff)
        cond = rep.max_condition_number
        prox = E.relative_bias(rep.ate, truth)
    except ProxCausalError as exc:
        log.debug("proximal estimate failed: %s", exc)
        failed = True
        try:
            cond = max(E.condition_number(E.cond_matrix(model, x)) for x in (0, 1))
        except ProxCausalError:
            pass
    gated = not failed and cond > cond_cutoff
    if gated:
        prox = None
    reg, reg_ci = None, None
    try:
        rr = E.regression_ate(data_or_model, COVARIATES)
        reg = E.relative_bias(rr.ate, truth)
        if rr.ci is not None:
            reg_ci = tuple(E.relative_bias(c, truth) for c in rr.ci)
    except ProxCausalError as exc:
        log.debug("regression failed: %s", exc)
    return RunResult(prox, reg, cond, gated, failed, reg_ci)


def _replicate(spec: dgp.DgpSpec, cfg: ExperimentConfig) -> list[RunResult]:
    truth = dgp.true_ate(spec)
    if cfg.population:
        model = E.ProbModel.from_joint(dgp.exact_joint(spec))
        return [evaluate(spec, model, truth, cfg.cond_cutoff)]

    def one(run: int) -> RunResult:
        data = dgp.sample(spec, cfg.n_per_run, (cfg.seed, run))
        return evaluate(spec, data, truth, cfg.cond_cutoff)

    return _map(one, range(cfg.n_runs), cfg.threads)


def _map(fn: Callable, items, threads: int) -> list:
    items = list(items)
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _summaries(runs: list[RunResult]) -> dict[str, SummaryStats]:
    n_failed = sum(r.failed for r in runs)
    prox = summarize([r.proximal for r in runs], E.PROXIMAL, n_failed)
    reg_cis = [r.reg_ci for r in runs if r.reg_ci is not None]
    reg = summarize([r.regression for r in runs], E.REGRESSION,
                    sum(r.regression is None for r in runs), reg_cis)
    return {E.PROXIMAL: prox, E.REGRESSION: reg}


def _apply(spec: dgp.DgpSpec, cfg: ExperimentConfig, **extra) -> dgp.DgpSpec:
    allowed = set(dgp.edge_keys(spec.graph_id))
    if spec.graph_id == dgp.HIGHDIM_U:
        allowed -= set(spec.delta_vectors)
    deltas = {k: v for k, v in {**cfg.overrides, **extra}.items() if k in allowed}
    out = replace(spec, phi=cfg.phi, deltas={**spec.deltas, **deltas})
    out.validate()
    return out


# --- studies ---------------------------------------------------------------------

def table1_specs(cfg: ExperimentConfig) -> dict[str, dgp.DgpSpec]:
    return {g: _apply(dgp.default_spec(g), cfg) for g in TABLE1_GRAPHS}


def table2_specs(cfg: ExperimentConfig) -> dict[str, dgp.DgpSpec]:
    out = {}
    for name, patterns in TABLE2_SCENARIOS.items():
        if patterns is None:
            spec = dgp.default_spec(dgp.EXOTIC2)
        else:
            spec = dgp.highdim_spec(*patterns)
        out[name] = _apply(spec, cfg)
    return out


def run_table1(cfg: ExperimentConfig) -> dict[str, dict[str, SummaryStats]]:
    return {g: _summaries(_replicate(s, cfg)) for g, s in table1_specs(cfg).items()}


def run_table2(cfg: ExperimentConfig) -> dict[str, dict[str, SummaryStats]]:
    return {name: _summaries(_replicate(s, cfg)) for name, s in table2_specs(cfg).items()}


def _scan(graph_id: str, cfg: ExperimentConfig) -> list[ScanPoint]:
    points = []
    for value in cfg.grid:
        spec = _apply(dgp.default_spec(graph_id), cfg, **{cfg.param: value})
        runs = _replicate(spec, cfg)
        conds = [r.cond for r in runs]
        cond = float(np.median(conds))
        omitted = cond > cfg.cond_cutoff
        prox = [r.proximal for r in runs if r.proximal is not None]
        regs = [r.regression for r in runs if r.regression is not None]
        bias = {
            E.PROXIMAL: None if omitted or not prox else float(np.mean(prox)),
            E.REGRESSION: float(np.mean(regs)) if regs else None,
        }
        ci = {}
        cis = [r.reg_ci for r in runs if r.reg_ci is not None]
        if cis:
            ci[E.REGRESSION] = (float(np.mean([c[0] for c in cis])), float(np.mean([c[1] for c in cis])))
        points.append(ScanPoint(cfg.param, value, bias, cond, omitted, ci))
    return points


def run_condition_scan(cfg: ExperimentConfig) -> list[ScanPoint]:
    """Max-over-arms condition number of P(W | Z, x) along one edge strength."""
    if cfg.param not in dgp.edge_keys(dgp.BASE):
        raise InvalidSpec(f"{cfg.param!r} is not an edge of the base graph")
    return _scan(dgp.BASE, cfg)


def run_violation_scan(cfg: ExperimentConfig) -> list[ScanPoint]:
    """Bias as the forbidden W -> X edge strengthens; gated by condition number."""
    return _scan(dgp.VIOLATION, replace(cfg, param="WX"))


def run_study(cfg: ExperimentConfig):
    return {
        TABLE1: run_table1,
        TABLE2: run_table2,
        CONDITION_SCAN: run_condition_scan,
        VIOLATION_SCAN: run_violation_scan,
    }[cfg.study](cfg)


# --- output ------------------------------------------------------------------------

TABLE_COLUMNS = ("scenario", "method", "mean_bias", "sd_bias", "n_runs", "n_omitted", "ci_low", "ci_high")
SCAN_COLUMNS = ("param", "value", "method", "bias", "cond_number", "omitted", "ci_low", "ci_high")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_rows(results: dict[str, dict[str, SummaryStats]]) -> list[dict]:
    rows = []
    for scenario, per_method in results.items():
        for method, s in per_method.items():
            rows.append({
                "scenario": scenario, "method": method, "mean_bias": s.mean, "sd_bias": s.sd,
                "n_runs": s.n_runs, "n_omitted": s.n_omitted, "ci_low": s.ci_low, "ci_high": s.ci_high,
            })
    return rows


def scan_rows(points: list[ScanPoint]) -> list[dict]:
    rows = []
    for p in points:
        for method in (E.PROXIMAL, E.REGRESSION):
            lo, hi = p.ci.get(method, (None, None))
            rows.append({
                "param": p.param, "value": p.value, "method": method, "bias": p.bias.get(method),
                "cond_number": p.cond_number, "omitted": p.omitted if method == E.PROXIMAL else False,
                "ci_low": lo, "ci_high": hi,
            })
    return rows


def to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def study_rows(cfg: ExperimentConfig, result) -> tuple[list[dict], Sequence[str]]:
    if cfg.study in (TABLE1, TABLE2):
        return table_rows(result), TABLE_COLUMNS
    return scan_rows(result), SCAN_COLUMNS


# --- config files ----------------------------------------------------------------------

_INT_KEYS = ("n_per_run", "n_runs", "seed", "threads")


def config_from_text(text: str, study: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    for section in cp.sections():
        if section not in ("experiment", "graph", "phi", "deltas"):
            raise ConfigError(f"[{section}]", "unknown section")
    kw: dict = {}
    if cp.has_section("experiment"):
        for key, raw in cp["experiment"].items():
            raw = raw.strip()
            name = f"[experiment] {key}"
            if key in _INT_KEYS:
                try:
                    kw[key] = int(float(raw)) if "e" in raw.lower() else int(raw)
                except ValueError:
                    raise ConfigError(name, f"not an integer: {raw!r}") from None
            elif key == "cond_cutoff":
                try:
                    kw[key] = float(raw)
                except ValueError:
                    raise ConfigError(name, f"not a number: {raw!r}") from None
            elif key == "grid":
                try:
                    kw[key] = tuple(float(v) for v in raw.split(",") if v.strip())
                except ValueError:
                    raise ConfigError(name, f"not a list of numbers: {raw!r}") from None
            elif key == "population":
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ConfigError(name, f"not a boolean: {raw!r}")
                kw[key] = raw.lower() in ("true", "1", "yes")
            elif key in ("study", "param"):
                kw[key] = raw
            else:
                raise ConfigError(name, "unknown key")
    if cp.has_section("phi"):
        for key, raw in cp["phi"].items():
            if key != "value":
                raise ConfigError(f"[phi] {key}", "unknown key")
            try:
                kw["phi"] = float(raw)
            except ValueError:
                raise ConfigError("[phi] value", f"not a number: {raw!r}") from None
    if cp.has_section("deltas"):
        overrides = {}
        for key, raw in cp["deltas"].items():
            if key not in dgp.DEFAULT_DELTAS:
                raise ConfigError(f"[deltas] {key}", "unknown edge")
            try:
                overrides[key] = float(raw)
            except ValueError:
                raise ConfigError(f"[deltas] {key}", f"not a number: {raw!r}") from None
        kw["overrides"] = overrides
    if study is not None:
        kw["study"] = study
    return ExperimentConfig(**kw)


def load_config(path, study: Optional[str] = None) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_text(fh.read(), study)
