"""Simulation study runner: scenarios P1/P2 (Poisson) and T1/T2 (Thomas).

Scenarios ending in 1 add Gaussian displacement noise, those ending in 2
apply distance-dependent hardcore thinning.  One covariate field is drawn per
configuration and reused across cells and repetitions; every repetition gets
its own seed stream derived from ``(seed, n, c, rep)``.  Within a repetition
all penalties and selectors see the same data and the same subsamples.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .criteria import BIC, CBIC, CERIC, ERIC, SecondOrderSpec, select_by_criterion
from .geometry import CovariateField, Window, erode, make_quadrature, read_covariates_csv, synth_covariates
from .likelihood import build_fit_data
from .metrics import SelectionOutcome, report
from .noise import DISPLACEMENT, HARDCORE, NoiseSpec, apply_noise
from .secondorder import two_step_fit
from .simulate import LogLinearModel, ThomasParams, calibrate_intercept, sample_poisson, sample_thomas, stream
from .solver import L0, L1, PathConfig, adaptive_path, log_grid
from .stability import StabilityConfig, select_stable, stability_path

log = logging.getLogger(__name__)

SCENARIOS = {"P1": ("poisson", DISPLACEMENT), "P2": ("poisson", HARDCORE),
             "T1": ("thomas", DISPLACEMENT), "T2": ("thomas", HARDCORE)}
STABILITY = "stability"
SELECTORS = (BIC, ERIC, CBIC, CERIC, STABILITY)
CSV_COLUMNS = ("scenario", "penalty", "selector", "n", "c", "tpr", "fpr", "ppv", "f1", "phi_s", "pfer", "reps")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "P1"
    n_grid: tuple = (50, 100, 150, 200, 250)
    c_grid: tuple = (0, 1, 2, 3, 4)
    reps: int = 20
    penalty: tuple = (L0,)
    selector: tuple = (STABILITY,)
    second_order: str = "oracle"
    true_beta: tuple | None = None
    thomas_params: ThomasParams = ThomasParams(4e-3, 1.5)
    seed: int = 0
    covariate_seed: int = 0
    p: int = 15
    covariates: str | None = None
    lambda_max: float | None = None
    lambda_min: float | None = None
    lambda_count: int = 35
    K: int = 50
    p_thin: float = 0.5
    pi_th: float = 0.9
    pfer_target: float = 1.0
    n_pilot: int = 10
    single_precision: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        for name in ("penalty", "selector", "n_grid", "c_grid"):
            val = getattr(self, name)
            val = (val,) if isinstance(val, (str, int, float)) else tuple(val)
            if not val:
                raise ConfigError(f"{name} must be nonempty")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "penalty", tuple(s.upper() for s in self.penalty))
        if any(s not in (L0, L1) for s in self.penalty):
            raise ConfigError(f"unknown penalty in {self.penalty}")
        sel = tuple(_canonical_selector(s) for s in self.selector)
        object.__setattr__(self, "selector", sel)
        if self.second_order not in ("oracle", "estimated", "none"):
            raise ConfigError(f"unknown second_order {self.second_order!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if any(n <= 0 for n in self.n_grid) or any(c < 0 for c in self.c_grid):
            raise ConfigError("n_grid must be positive and c_grid non-negative")
        beta = self.true_beta if self.true_beta is not None else self.default_beta()
        object.__setattr__(self, "true_beta", tuple(float(b) for b in beta))
        try:
            StabilityConfig(self.K, self.p_thin, self.pi_th, self.pfer_target, 0, self.n_pilot)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    @property
    def process(self) -> str:
        return SCENARIOS[self.scenario][0]

    @property
    def noise_kind(self) -> str:
        return SCENARIOS[self.scenario][1]

    def default_beta(self):
        return (1.0, 0.5) if self.scenario.startswith("P") else (2.0, 0.75)

    def lambda_grid(self) -> np.ndarray:
        if self.process == "poisson":
            hi, lo = 5e2, 1e-4
        else:
            hi, lo = 1e3, 1e-3
        hi = self.lambda_max or hi
        lo = self.lambda_min or lo
        return log_grid(hi, lo, self.lambda_count)


def _canonical_selector(s: str) -> str:
    table = {k.lower(): k for k in SELECTORS}
    try:
        return table[s.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown selector {s!r}") from None


@dataclass
class Setup:
    """Quantities shared by every repetition of a configuration."""

    config: ExperimentConfig
    field: CovariateField
    window: Window
    fit_window: Window
    beta: np.ndarray
    truth: np.ndarray
    quad: object = None
    path_config: PathConfig = None
    sim_quad: object = None

    @classmethod
    def build(cls, config: ExperimentConfig) -> "Setup":
        if config.covariates:
            fld = read_covariates_csv(config.covariates)
        else:
            fld = synth_covariates(config.covariate_seed, config.p)
        window = fld.extent
        fit_window = erode(window, 4 * config.thomas_params.sigma) if config.process == "thomas" else window
        beta = np.zeros(fld.p)
        tb = np.asarray(config.true_beta)
        if len(tb) > fld.p:
            raise ConfigError("more true coefficients than covariates")
        beta[: len(tb)] = tb
        truth = np.flatnonzero(beta != 0)
        quad = make_quadrature(fld, fit_window)
        sim_quad = make_quadrature(fld, window) if fit_window != window else quad
        return cls(config, fld, window, fit_window, beta, truth, quad, PathConfig(config.lambda_grid()), sim_quad)


def _rep_seed(config, n, c, rep, *extra) -> np.random.Generator:
    return stream(config.seed, int(n), int(round(c * 1000)), rep, *extra)


def simulate_rep(setup: Setup, n: float, c: float, rep: int):
    """True-intensity model and the noisy pattern restricted to the fitting window."""
    cfg = setup.config
    model = calibrate_intercept(LogLinearModel(0.0, setup.beta), setup.field, setup.quad, n)
    rng = _rep_seed(cfg, n, c, rep, 0)
    full = setup.sim_quad
    if cfg.process == "poisson":
        pattern = sample_poisson(model, setup.field, full, rng)
    else:
        pattern = sample_thomas(model, cfg.thomas_params, setup.field, full, rng)
    noisy = apply_noise(pattern, NoiseSpec(cfg.noise_kind, c, setup.field.dx), rng)
    return model, noisy.restrict(setup.fit_window)


def _second_order(setup, pattern, fit, path, refits=None):
    cfg = setup.config
    if cfg.second_order == "none" or cfg.process == "poisson":
        return SecondOrderSpec.poisson()
    if cfg.second_order == "oracle":
        return SecondOrderSpec.thomas(cfg.thomas_params)
    first = select_by_criterion(path, fit, BIC, refits=refits).coefficients
    return two_step_fit(pattern, setup.field, setup.fit_window, first)


def run_cell(setup: Setup | ExperimentConfig, n: float, c: float, rep: int):
    """One repetition for every (penalty, selector) pair.

    Returns ``(outcomes, diagnostics)`` where ``outcomes`` maps
    ``(penalty, selector)`` to a :class:`SelectionOutcome`.  Failures yield
    an empty selection tagged with the error message.
    """
    if isinstance(setup, ExperimentConfig):
        setup = Setup.build(setup)
    cfg = setup.config
    p = setup.field.p
    outcomes, diag = {}, {"n": n, "c": c, "rep": rep, "errors": {}}

    def record(key, support, err=None):
        outcomes[key] = SelectionOutcome.from_support(support, setup.truth, p, err)
        if err is not None:
            diag["errors"]["/".join(key)] = err

    try:
        _, pattern = simulate_rep(setup, n, c, rep)
        diag["n_points"] = len(pattern)
        fit = build_fit_data(pattern, setup.field, setup.quad)
    except (ArithmeticError, ValueError) as err:
        for key in ((a, b) for a in cfg.penalty for b in cfg.selector):
            record(key, [], f"{type(err).__name__}: {err}")
        return outcomes, diag

    crit = [s for s in cfg.selector if s != STABILITY]
    stab_seed = int(_rep_seed(cfg, n, c, rep, 1).integers(2**31))
    for pen in cfg.penalty:
        spec = None
        if crit:
            try:
                path, _ = adaptive_path(fit, pen, setup.path_config)
                refits: dict = {}
                for sel in crit:
                    try:
                        if sel in (CBIC, CERIC) and spec is None:
                            spec = _second_order(setup, pattern, fit, path, refits)
                        res = select_by_criterion(path, fit, sel, spec if sel in (CBIC, CERIC) else None, refits)
                        record((pen, sel), res.support)
                    except (ArithmeticError, ValueError) as err:
                        record((pen, sel), [], f"{type(err).__name__}: {err}")
            except (ArithmeticError, ValueError) as err:
                for sel in crit:
                    record((pen, sel), [], f"{type(err).__name__}: {err}")
        if STABILITY in cfg.selector:
            try:
                scfg = StabilityConfig(cfg.K, cfg.p_thin, cfg.pi_th, cfg.pfer_target, stab_seed, cfg.n_pilot,
                                       cfg.single_precision)
                sp = stability_path(pattern, setup.field, setup.quad, pen, scfg, setup.path_config)
                res = select_stable(sp, pattern, setup.field, setup.quad)
                record((pen, STABILITY), res.support)
                diag.setdefault("stability", {})[pen] = {
                    "lambda_max": sp.lambda_max, "lambda_min": sp.lambda_min,
                    "q_lambda": res.diagnostics["q_lambda"], "pfer_bound": res.pfer_bound,
                    "warning": sp.warning,
                }
            except (ArithmeticError, ValueError) as err:
                record((pen, STABILITY), [], f"{type(err).__name__}: {err}")
    return outcomes, diag


@dataclass
class GridResult:
    rows: list
    diagnostics: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[k]) for k in CSV_COLUMNS])
        return buf.getvalue()

    def failure_counts(self) -> dict:
        counts: dict = {}
        for d in self.diagnostics:
            for key in d["errors"]:
                counts[key] = counts.get(key, 0) + 1
        return counts

    def lookup(self, penalty, selector, n="all", c="all") -> dict:
        for row in self.rows:
            if (row["penalty"], row["selector"], row["n"], row["c"]) == (penalty, selector, n, c):
                return row
        raise KeyError((penalty, selector, n, c))


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.10g}"
    return str(v)


def run_grid(config: ExperimentConfig, progress=None) -> GridResult:
    """Every (n, c) cell for every (penalty, selector) plus grand-mean rows."""
    setup = Setup.build(config)
    per_key: dict = {}
    diags = []
    for n in config.n_grid:
        for c in config.c_grid:
            for rep in range(config.reps):
                out, diag = run_cell(setup, n, c, rep)
                diags.append(diag)
                for key, o in out.items():
                    per_key.setdefault(key + (n, c), []).append(o)
            if progress:
                progress(n, c)
    rows = []
    metric_names = ("tpr", "fpr", "ppv", "f1", "phi_s", "pfer")
    for pen in config.penalty:
        for sel in config.selector:
            cell_rows = []
            for n in config.n_grid:
                for c in config.c_grid:
                    rep_ = report(per_key[(pen, sel, n, c)])
                    row = {"scenario": config.scenario, "penalty": pen, "selector": sel, "n": n, "c": c,
                           "tpr": rep_.tpr, "fpr": rep_.fpr, "ppv": rep_.ppv, "f1": rep_.f1,
                           "phi_s": rep_.phi_s, "pfer": rep_.empirical_pfer, "reps": rep_.reps}
                    cell_rows.append(row)
            grand = {"scenario": config.scenario, "penalty": pen, "selector": sel, "n": "all", "c": "all",
                     "reps": sum(r["reps"] for r in cell_rows)}
            for m in metric_names:
                vals = np.array([r[m] for r in cell_rows], dtype=float)
                grand[m] = float(np.nanmean(vals)) if np.isfinite(vals).any() else float("nan")
            rows.extend(cell_rows)
            rows.append(grand)
    return GridResult(rows, diags, per_key)


# --- configuration files -------------------------------------------------

def _list(s, conv):
    return tuple(conv(x) for x in s.replace(",", " ").split())


_FIELDS = {
    "scenario": str, "reps": int, "second_order": str, "seed": int, "covariate_seed": int, "p": int,
    "covariates": str, "lambda_max": float, "lambda_min": float, "lambda_count": int, "K": int,
    "p_thin": float, "pi_th": float, "pfer_target": float, "n_pilot": int, "single_precision": "bool",
}
_LISTS = {"n_grid": float, "c_grid": float, "penalty": str, "selector": str, "true_beta": float}


def _num(v):
    return int(v) if float(v).is_integer() else float(v)


def parse_config(text: str) -> list[ExperimentConfig]:
    """Experiments from INI text, one per section (``[DEFAULT]`` is inherited)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from err
    sections = cp.sections() or (["DEFAULT"] if cp.defaults() else [])
    if not sections:
        raise ConfigError("configuration has no experiments")
    out = []
    for name in sections:
        sec = cp[name]
        kw = {}
        for key, val in sec.items():
            if key == "kappa" or key == "sigma":
                continue
            try:
                if key in _LISTS:
                    items = _list(val, _LISTS[key])
                    kw[key] = tuple(_num(x) for x in items) if key in ("n_grid", "c_grid") else items
                elif key in _FIELDS and _FIELDS[key] == "bool":
                    kw[key] = sec.getboolean(key)
                elif key in _FIELDS:
                    kw[key] = _FIELDS[key](val)
                else:
                    raise ConfigError(f"unknown key {key!r} in section [{name}]")
            except ValueError as err:
                raise ConfigError(f"bad value for {key!r}: {val!r}") from err
        if "kappa" in sec or "sigma" in sec:
            kw["thomas_params"] = ThomasParams(float(sec.get("kappa", 4e-3)), float(sec.get("sigma", 1.5)))
        if "scenario" not in kw and name.upper() in SCENARIOS:
            kw["scenario"] = name.upper()
        try:
            out.append(ExperimentConfig(**kw))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"section [{name}]: {err}") from err
    return out


def config_echo(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["thomas_params"] = asdict(config.thomas_params)
    return d


def diagnostics_json(result: GridResult, config: ExperimentConfig) -> str:
    doc = {"config": config_echo(config), "failures": result.failure_counts(), "reps": result.diagnostics}
    return json.dumps(doc, indent=1, sort_keys=True, default=float)


__all__ = [
    "ConfigError", "ExperimentConfig", "GridResult", "SCENARIOS", "SELECTORS", "STABILITY", "Setup",
    "parse_config", "run_cell", "run_grid", "simulate_rep",
]
