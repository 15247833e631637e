"""Stability selection over p-thinned subsamples with PFER control.

Each subsample ``Z_k`` gets its own unpenalized pilot fit, adaptive weights
and warm-started path.  The first ``n_pilot`` subsamples double as the pilot
set that calibrates the lambda range: ``lambda_max`` is the smallest grid
value at which all their supports are empty, ``lambda_min`` the largest grid
value at which the mean size of their support union reaches the value that
makes the PFER bound equal to ``pfer_target``.  Paths stop at ``lambda_min``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import CovariateField, PointPattern, QuadratureScheme, Window, make_quadrature
from .likelihood import (
    DegenerateDataError, Kernel, build_fit_data, design_matrix, fit_unpenalized, intercept_only, node_counts,
)
from .noise import p_thin as thin
from .simulate import LogLinearModel, stream
from .solver import PathConfig, adaptive_weights, pgd_batch, unpenalized_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilityConfig:
    K: int = 50
    p_thin: float = 0.5
    pi_th: float = 0.9
    pfer_target: float = 1.0
    seed: int = 0
    n_pilot: int = 10
    single_precision: bool = False

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least two subsamples")
        if not 0 < self.p_thin < 1:
            raise ValueError("p_thin must lie in (0, 1)")
        if not 0.5 < self.pi_th <= 1:
            raise ValueError("pi_th must lie in (0.5, 1]")
        if not self.pfer_target > 0:
            raise ValueError("pfer_target must be positive")
        if self.n_pilot < 1:
            raise ValueError("n_pilot must be >= 1")
        # small K: every subsample is a pilot
        object.__setattr__(self, "n_pilot", min(self.n_pilot, self.K))


@dataclass
class StabilityPath:
    """Inclusion frequencies ``pi[m, j]`` over the calibrated lambda range.

    ``q_curve[m]`` is the mean (over all ``K`` subsamples) size of the support
    union over ``lambdas[:m + 1]``; ``pilot_curve`` is the same over the pilot
    subsamples only, and drives calibration and re-thresholding.
    """

    lambdas: np.ndarray
    pi: np.ndarray
    q_curve: np.ndarray
    pilot_curve: np.ndarray
    config: StabilityConfig
    lambda_max: float
    lambda_min: float
    warning: bool = False
    n_empty: int = 0
    names: tuple = ()

    @property
    def q_lambda(self) -> float:
        return float(self.q_curve[-1]) if len(self.q_curve) else 0.0

    @property
    def p(self) -> int:
        return self.pi.shape[1]

    def window_mask(self) -> np.ndarray:
        return (self.lambdas <= self.lambda_max * (1 + 1e-12)) & (self.lambdas >= self.lambda_min * (1 - 1e-12))

    def max_pi(self) -> np.ndarray:
        mask = self.window_mask()
        if not mask.any():
            return np.zeros(self.p)
        return self.pi[mask].max(axis=0)

    def to_csv(self, path) -> None:
        names = self.names or tuple(f"z{j + 1}" for j in range(self.p))
        with open(path, "w") as fh:
            fh.write("lambda,covariate,pi\n")
            for m, lam in enumerate(self.lambdas):
                for j, name in enumerate(names):
                    fh.write(f"{lam:.12g},{name},{self.pi[m, j]:.12g}\n")


@dataclass
class SelectionResult:
    support: np.ndarray
    coefficients: LogLinearModel
    pfer_bound: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, names=None, config=None) -> str:
        names = list(names) if names is not None else [f"z{j + 1}" for j in range(self.coefficients.p)]
        doc = {
            "support": [names[j] for j in self.support],
            "support_index": [int(j) for j in self.support],
            "log_omega": self.coefficients.log_omega,
            "coefficients": {n: float(b) for n, b in zip(names, self.coefficients.beta)},
            "pfer_bound": self.pfer_bound,
            "diagnostics": self.diagnostics,
        }
        if config is not None:
            doc["config"] = asdict(config) if hasattr(config, "__dataclass_fields__") else dict(config)
        return json.dumps(doc, indent=2, sort_keys=True, default=float)


def pfer_bound(pi_th: float, q_lambda: float, p: int) -> float:
    """Upper bound ``q^2 / (p (2 pi_th - 1))`` on the expected number of false selections."""
    if not pi_th > 0.5:
        raise ValueError("pi_th must exceed 0.5")
    if p < 1:
        raise ValueError("p must be >= 1")
    # squared ratio: rounds sqrt(12)-type inputs back to the exact value
    return (q_lambda / np.sqrt(p * (2 * pi_th - 1))) ** 2


def q_target(pfer_target: float, pi_th: float, p: int) -> float:
    """Union size at which :func:`pfer_bound` equals ``pfer_target``."""
    return float(np.sqrt(pfer_target * p * (2 * pi_th - 1)))


def _calibrate(lambdas, pilot_supports, target):
    """Indices ``(i_max, i_min, warning)`` for grid ``lambdas`` given pilot supports ``(n, M, p)``."""
    empty = ~pilot_supports.any(axis=2).any(axis=0)
    nonempty = np.flatnonzero(~empty)
    warn = False
    if empty.all():
        i_max = len(lambdas) - 1
    elif nonempty[0] == 0:
        i_max = 0
        warn = True
    else:
        i_max = nonempty[0] - 1
    union = np.logical_or.accumulate(pilot_supports, axis=1).sum(axis=2).mean(axis=0)
    hit = np.flatnonzero(union >= target - 1e-12)
    if hit.size:
        i_min = max(hit[0], i_max)
    else:
        i_min = len(lambdas) - 1
        warn = True
    return i_max, i_min, warn, union


def subsample_stats(pattern, field: CovariateField, quad: QuadratureScheme, config: StabilityConfig):
    """Sufficient statistics of the ``K`` thinned subsamples, shape ``(K, p + 1)``."""
    X = design_matrix(quad)
    out = np.empty((config.K, X.shape[1]))
    for k in range(config.K):
        z = thin(pattern, config.p_thin, stream(config.seed, k))
        out[k] = X.T @ node_counts(z, field, quad)
    return out


def replicate_stats(patterns, field, quad, config: StabilityConfig):
    """Bootstrap over replicated patterns: draw ``len(patterns)`` with replacement.

    Returns the pooled statistics and the integral multiplier (number drawn).
    """
    X = design_matrix(quad)
    per = np.array([X.T @ node_counts(pp, field, quad) for pp in patterns])
    out = np.empty((config.K, X.shape[1]))
    for k in range(config.K):
        draw = stream(config.seed, k).integers(0, len(patterns), len(patterns))
        out[k] = per[draw].sum(axis=0)
    return out, float(len(patterns))


def _run(kern, mult, T, penalty_kind, config: StabilityConfig, path_config: PathConfig, calibrate=True):
    K, d = T.shape
    p = d - 1
    lambdas = path_config.lambda_grid
    M = len(lambdas)
    nonempty = T[:, 0] > 0
    if not nonempty.all():
        log.info("%d of %d subsamples are empty", int((~nonempty).sum()), K)
    idx = np.flatnonzero(nonempty)
    supports = np.zeros((K, M, p), dtype=bool)
    target = q_target(config.pfer_target, config.pi_th, p)
    pilot_rows = np.arange(config.n_pilot)
    step, gamma0 = path_config.step_for(penalty_kind)
    M_done = M
    if idx.size:
        theta_hat = unpenalized_batch(kern, mult, T[idx])
        weights = adaptive_weights(theta_hat[:, 1:])
        Theta = np.zeros((idx.size, d))
        Theta[:, 0] = intercept_only(T[idx, 0], mult, kern.area)
        gamma = np.full(idx.size, gamma0)
        for m, lam in enumerate(lambdas):
            Theta, gamma, _, _, _ = pgd_batch(
                kern, mult, T[idx], Theta, lam * weights, penalty_kind, step, gamma,
                path_config.tol, path_config.max_iter, path_config.stall_window,
            )
            supports[idx, m] = Theta[:, 1:] != 0
            if calibrate:
                pilot_union = np.logical_or.accumulate(supports[pilot_rows, : m + 1], axis=1)[:, -1]
                if pilot_union.sum(axis=1).mean() >= target - 1e-12:
                    M_done = m + 1
                    break
    i_max, i_min, warn, pilot_curve = _calibrate(lambdas[:M_done], supports[pilot_rows, :M_done], target)
    if not calibrate:
        i_max, i_min = 0, M_done - 1
    sl = slice(0, M_done)
    pi = supports[:, sl].mean(axis=0)
    q_curve = np.logical_or.accumulate(supports[:, sl], axis=1).sum(axis=2).mean(axis=0)
    return StabilityPath(
        lambdas=lambdas[sl].copy(), pi=pi, q_curve=q_curve, pilot_curve=pilot_curve, config=config,
        lambda_max=float(lambdas[i_max]), lambda_min=float(lambdas[i_min]), warning=bool(warn and calibrate),
        n_empty=int((~nonempty).sum()),
    )


def stability_path(
    pattern,
    field: CovariateField,
    window: Window | QuadratureScheme,
    penalty_kind: str,
    config: StabilityConfig,
    path_config: PathConfig,
    calibrate: bool = True,
) -> StabilityPath:
    """Inclusion frequencies over ``K`` subsamples.

    ``pattern`` is a :class:`PointPattern` (p-thinning) or a list of replicated
    patterns (bootstrap with replacement). With ``calibrate`` the paths stop at
    the calibrated ``lambda_min`` and the result records the range.
    """
    quad = window if isinstance(window, QuadratureScheme) else make_quadrature(field, window)
    kern = Kernel(design_matrix(quad), quad.weights, np.float32 if config.single_precision else np.float64)
    if isinstance(pattern, PointPattern):
        if len(pattern) == 0:
            raise DegenerateDataError("stability selection needs a nonempty pattern")
        T, mult = subsample_stats(pattern, field, quad, config), config.p_thin
    else:
        T, mult = replicate_stats(list(pattern), field, quad, config)
    sp = _run(kern, mult, T, penalty_kind, config, path_config, calibrate)
    sp.names = field.names
    return sp


def calibrate_lambda_range(pattern, field, window, penalty_kind, config: StabilityConfig, path_config: PathConfig):
    """``(lambda_max, lambda_min, warning)`` from the pilot subsamples alone."""
    pilot = replace(config, K=max(config.n_pilot, 2))
    sp = stability_path(pattern, field, window, penalty_kind, pilot, path_config)
    return sp.lambda_max, sp.lambda_min, sp.warning


def rethreshold(path: StabilityPath, pfer_target: float) -> StabilityPath:
    """Narrow the lambda range of ``path`` to a smaller PFER target without refitting."""
    if pfer_target > path.config.pfer_target + 1e-12:
        raise ValueError("can only tighten the PFER target of a computed path")
    target = q_target(pfer_target, path.config.pi_th, path.p)
    hit = np.flatnonzero(path.pilot_curve >= target - 1e-12)
    i_max = int(np.flatnonzero(path.lambdas <= path.lambda_max * (1 + 1e-12))[0])
    i_min = max(int(hit[0]), i_max) if hit.size else len(path.lambdas) - 1
    cfg = replace(path.config, pfer_target=pfer_target)
    return StabilityPath(
        path.lambdas[: i_min + 1], path.pi[: i_min + 1], path.q_curve[: i_min + 1],
        path.pilot_curve[: i_min + 1], cfg, path.lambda_max, float(path.lambdas[i_min]),
        path.warning and not hit.size, path.n_empty, path.names,
    )


def select_stable(path: StabilityPath, pattern: PointPattern, field: CovariateField, window) -> SelectionResult:
    """Threshold the maximal inclusion frequency and refit on the full pattern."""
    support = np.flatnonzero(path.max_pi() >= path.config.pi_th - 1e-12)
    fit = build_fit_data(pattern, field, window)
    model = fit_unpenalized(fit, support=support)
    beta = np.zeros(path.p)
    beta[support] = model.beta[support]
    mask = path.window_mask()
    q = float(path.q_curve[mask][-1]) if mask.any() else 0.0
    return SelectionResult(
        support=support,
        coefficients=LogLinearModel(model.log_omega, beta),
        pfer_bound=pfer_bound(path.config.pi_th, q, path.p),
        diagnostics={
            "lambda_max": path.lambda_max,
            "lambda_min": path.lambda_min,
            "q_lambda": q,
            "max_pi": path.max_pi().tolist(),
            "calibration_warning": path.warning,
            "empty_subsamples": path.n_empty,
        },
    )
