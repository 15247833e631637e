"""Proximal gradient descent for adaptive L0/L1-penalized intensity fits.

Every solver routine works on a stack of ``K`` independent problems that share
one quadrature (see :mod:`stabpp.likelihood`); single-pattern calls are the
``K = 1`` case.  The intercept is never penalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .likelihood import (
    FitData,
    NumericalError,
    fit_unpenalized,
    fit_unpenalized_batch,
    intercept_only,
)
from .simulate import LogLinearModel

log = logging.getLogger(__name__)

L0 = "L0"
L1 = "L1"
ZERO_COEF_WEIGHT = 1e12
BB_MIN, BB_MAX = 1e-8, 1e2
NONMONOTONE_MEMORY = 10


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    lam: float
    adaptive_weights: np.ndarray

    def __post_init__(self):
        if self.kind not in (L0, L1):
            raise ValueError(f"unknown penalty {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        w = np.asarray(self.adaptive_weights, dtype=float)
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise ValueError("adaptive weights must be non-negative")
        object.__setattr__(self, "adaptive_weights", w)


@dataclass(frozen=True)
class PathConfig:
    """Regularization path and PGD stopping rules.

    ``step`` is ``"bb"`` (Barzilai-Borwein starting from ``gamma0``) or
    ``"fixed"`` (constant ``gamma0``).  ``None`` picks the per-penalty
    default: BB from 1e-4 for L1, fixed 1e-3 for L0.
    """

    lambda_grid: np.ndarray
    step: str | None = None
    gamma0: float | None = None
    max_iter: int = 5000
    tol: float = 1e-4
    stall_window: int = 1000

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float).ravel()
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
            raise ValueError("lambda grid must be positive and strictly decreasing")
        object.__setattr__(self, "lambda_grid", grid)
        if self.step not in (None, "bb", "fixed"):
            raise ValueError(f"unknown step policy {self.step!r}")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ValueError("step size must be positive")

    def step_for(self, kind: str) -> tuple[str, float]:
        step = self.step or ("bb" if kind == L1 else "fixed")
        gamma = self.gamma0 or (1e-4 if step == "bb" else 1e-3)
        return step, gamma


def log_grid(lam_max: float, lam_min: float, count: int) -> np.ndarray:
    """``count`` log-equidistant values from ``lam_max`` down to ``lam_min``."""
    return np.geomspace(lam_max, lam_min, count)


@dataclass
class PathResult:
    lambdas: np.ndarray
    coefs: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    objective: np.ndarray
    diagnostics: list = field(default_factory=list)

    @property
    def supports(self) -> np.ndarray:
        """Boolean ``(M, p)`` matrix of nonzero covariate coefficients."""
        return self.coefs[:, 1:] != 0

    def model(self, i: int) -> LogLinearModel:
        return LogLinearModel.from_vector(self.coefs[i])


# --- proximal operators ------------------------------------------------------

def prox_hard(x, xi):
    """Hard thresholding: keep ``x_i`` iff ``x_i^2 > xi_i^2``.

    With ``xi_i = sqrt(2 gamma lambda w_i)`` this is the prox of the weighted
    L0 penalty; ties at the boundary go to zero.
    """
    x = np.asarray(x, dtype=float)
    return np.where(x * x > np.square(xi), x, 0.0)


def prox_soft(x, shift):
    """Soft thresholding ``sign(x) max(|x| - shift, 0)``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - shift, 0.0)


def bb_step(d_beta, d_grad, previous: float = 1e-4) -> float:
    """Barzilai-Borwein step ``|db . dg| / |dg|^2`` clamped to ``[1e-8, 1e2]``."""
    d_beta = np.asarray(d_beta, dtype=float)
    d_grad = np.asarray(d_grad, dtype=float)
    den = d_grad @ d_grad
    if den == 0:
        return previous
    return float(np.clip(abs(d_beta @ d_grad) / den, BB_MIN, BB_MAX))


def adaptive_weights(beta_hat) -> np.ndarray:
    """``1 / |beta_hat|``; exact zeros get :data:`ZERO_COEF_WEIGHT`."""
    b = np.abs(np.asarray(beta_hat, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(b > 0, 1.0 / b, ZERO_COEF_WEIGHT)


def _prox(kind, Theta, gamma, thr):
    out = Theta.copy()
    scaled = gamma[:, None] * thr
    if kind == L0:
        out[:, 1:] = prox_hard(Theta[:, 1:], np.sqrt(2.0 * scaled))
    else:
        out[:, 1:] = prox_soft(Theta[:, 1:], scaled)
    return out


def _penalty(kind, Theta, thr):
    beta = Theta[:, 1:]
    if kind == L0:
        return np.where(beta != 0, thr, 0.0).sum(axis=1)
    return (thr * np.abs(beta)).sum(axis=1)


# --- batched PGD ----------------------------------------------------------

def pgd_batch(kern, p_thin, T, Theta0, thr, kind, step, gamma0, tol=1e-4,
              max_iter=5000, stall_window=1000):
    """Run PGD on ``K`` problems at once.

    ``thr`` is the ``(K, p)`` matrix ``lambda * w``. ``gamma0`` is a scalar or
    per-row array (BB steps carry over between warm-started calls).
    Returns ``(Theta, gamma, iterations, converged, objective)``.
    """
    T = np.atleast_2d(T)
    Theta = np.array(np.atleast_2d(Theta0), dtype=float)
    K = len(Theta)
    thr = np.broadcast_to(thr, (K, Theta.shape[1] - 1))
    gamma = np.broadcast_to(np.asarray(gamma0, dtype=float), (K,)).copy()
    f, G = kern.value_grad(p_thin, T, Theta)
    if not np.all(np.isfinite(f)):
        raise NumericalError("non-finite log-likelihood at the initial point")
    obj = f - _penalty(kind, Theta, thr)
    best = obj.copy()
    # recent objectives for the non-monotone acceptance test of BB steps
    hist = np.repeat(obj[:, None], NONMONOTONE_MEMORY, axis=1)
    since = np.zeros(K, dtype=int)
    iters = np.zeros(K, dtype=int)
    converged = np.zeros(K, dtype=bool)
    active = np.ones(K, dtype=bool)
    halvings = np.zeros(K, dtype=int)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g_idx = gamma[idx]
        cand = _prox(kind, Theta[idx] + g_idx[:, None] * G[idx], g_idx, thr[idx])
        fc, Gc = kern.value_grad(p_thin, T[idx], cand)
        bad = ~np.isfinite(fc)
        if bad.any() and step == "fixed":
            raise NumericalError(
                f"PGD diverged with fixed step {gamma0}; decrease the step size",
                last=LogLinearModel.from_vector(Theta[idx[bad][0]]),
            )
        if step == "bb":
            with np.errstate(invalid="ignore"):
                oc = fc - _penalty(kind, cand, thr[idx])
                ref = hist[idx].min(axis=1)
                bad |= ~(oc >= ref - kern.slack * np.abs(ref))
        if bad.any():
            halvings[idx[bad]] += 1
            if halvings[idx[bad]].max() > 60:
                raise NumericalError(
                    "PGD diverged: no acceptable step after 60 halvings",
                    last=LogLinearModel.from_vector(Theta[idx[bad][0]]),
                )
            gamma[idx[bad]] *= 0.5
        ok = ~bad
        acc = idx[ok]
        if acc.size == 0:
            continue
        halvings[acc] = 0
        c_ok, G_ok = cand[ok], Gc[ok]
        d_theta = c_ok - Theta[acc]
        if step == "bb":
            dg = G_ok - G[acc]
            den = np.einsum("kd,kd->k", dg, dg)
            num = np.abs(np.einsum("kd,kd->k", d_theta, dg))
            with np.errstate(divide="ignore", invalid="ignore"):
                gamma[acc] = np.where(den > 0, np.clip(num / den, BB_MIN, BB_MAX), gamma[acc])
        rel = np.linalg.norm(d_theta, axis=1) / np.maximum(np.linalg.norm(Theta[acc], axis=1), 1e-12)
        Theta[acc], G[acc] = c_ok, G_ok
        obj[acc] = fc[ok] - _penalty(kind, c_ok, thr[acc])
        hist[acc, iters[acc] % NONMONOTONE_MEMORY] = obj[acc]
        iters[acc] += 1
        improved = obj[acc] > best[acc] + 1e-10
        best[acc] = np.where(improved, obj[acc], best[acc])
        since[acc] = np.where(improved, 0, since[acc] + 1)
        done = rel < tol
        converged[acc] |= done
        active[acc] = ~(done | (since[acc] >= stall_window))
    return Theta, gamma, iters, converged, obj


def path_batch(kern, p_thin, T, weights, kind, config: PathConfig, theta0=None):
    """Warm-started paths for ``K`` problems.

    Returns coefficients ``(K, M, d)`` and per-(K, M) iterations, convergence
    flags and objective values.
    """
    T = np.atleast_2d(T)
    K, d = T.shape
    weights = np.broadcast_to(weights, (K, d - 1))
    step, gamma0 = config.step_for(kind)
    if theta0 is None:
        Theta = np.zeros((K, d))
        Theta[:, 0] = intercept_only(np.maximum(T[:, 0], 1e-300), p_thin, kern.area)
    else:
        Theta = np.array(np.atleast_2d(theta0), dtype=float)
    M = len(config.lambda_grid)
    coefs = np.empty((K, M, d))
    iters = np.empty((K, M), dtype=int)
    conv = np.empty((K, M), dtype=bool)
    objs = np.empty((K, M))
    gamma = np.full(K, gamma0)
    for m, lam in enumerate(config.lambda_grid):
        try:
            Theta, gamma, it, cv, ob = pgd_batch(
                kern, p_thin, T, Theta, lam * weights, kind, step, gamma,
                config.tol, config.max_iter, config.stall_window,
            )
        except NumericalError as err:
            raise NumericalError(f"lambda index {m} (lambda={lam:g}): {err}", last=err.last) from err
        coefs[:, m], iters[:, m], conv[:, m], objs[:, m] = Theta, it, cv, ob
    return coefs, iters, conv, objs


# --- public API -----------------------------------------------------------

def pgd_solve(fit: FitData, penalty: PenaltySpec, init: LogLinearModel, config: PathConfig):
    """Single penalized fit. Returns ``(model, converged, iterations)``."""
    step, gamma0 = config.step_for(penalty.kind)
    Theta, _, it, cv, _ = pgd_batch(
        fit.kernel, fit.p_thin_factor, fit.stat[None], init.vector()[None],
        penalty.lam * penalty.adaptive_weights[None], penalty.kind, step, gamma0,
        config.tol, config.max_iter, config.stall_window,
    )
    return LogLinearModel.from_vector(Theta[0]), bool(cv[0]), int(it[0])


def solve_path(fit: FitData, penalty_kind: str, adaptive_weights_, config: PathConfig) -> PathResult:
    """Regularization path from the largest to the smallest lambda with warm starts."""
    if fit.n_points == 0:
        raise NumericalError("cannot fit a path to an empty pattern")
    coefs, iters, conv, objs = path_batch(
        fit.kernel, fit.p_thin_factor, fit.stat[None],
        np.asarray(adaptive_weights_, dtype=float)[None], penalty_kind, config,
    )
    diags = [
        {"lambda": float(lam), "iterations": int(iters[0, m]), "objective": float(objs[0, m]),
         "converged": bool(conv[0, m])}
        for m, lam in enumerate(config.lambda_grid)
    ]
    for rec in diags:
        log.debug("path step %s", rec)
    return PathResult(config.lambda_grid.copy(), coefs[0], iters[0], conv[0], objs[0], diags)


def adaptive_path(fit: FitData, penalty_kind: str, config: PathConfig) -> tuple[PathResult, LogLinearModel]:
    """Unpenalized pilot fit, adaptive weights, then :func:`solve_path`."""
    pilot = fit_unpenalized(fit)
    return solve_path(fit, penalty_kind, adaptive_weights(pilot.beta), config), pilot


def unpenalized_batch(kern, p_thin, T):
    """Full-model pilot fits for a stack of statistics (rows with no points stay ``nan``)."""
    T = np.atleast_2d(T)
    out = np.full(T.shape, np.nan)
    ok = T[:, 0] > 0
    if ok.any():
        Theta, _, conv = fit_unpenalized_batch(kern, p_thin, T[ok], np.ones(T[ok].shape, bool))
        if not conv.all():
            log.warning("%d pilot fits hit the iteration cap", int((~conv).sum()))
        out[ok] = Theta
    return out
