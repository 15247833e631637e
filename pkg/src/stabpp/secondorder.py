"""Inhomogeneous K-function and minimum-contrast fitting of Thomas parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.spatial import cKDTree

from .criteria import SecondOrderSpec
from .geometry import CovariateField, PointPattern, Window
from .simulate import LogLinearModel, ThomasParams, intensity_at, thomas_K

log = logging.getLogger(__name__)

LOG_KAPPA_BOUNDS = (-12.0, 2.0)
LOG_SIGMA_BOUNDS = (-3.0, 4.0)


@dataclass(frozen=True)
class KEstimate:
    r_grid: np.ndarray
    k_hat: np.ndarray
    intensity_used: np.ndarray
    correction: str = "translation"

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.r_grid, self.k_hat]), delimiter=",",
                   header="r,k_hat", comments="", fmt="%.12g")


def default_r_grid(r_max: float = 25.0, count: int = 128) -> np.ndarray:
    return np.linspace(0.0, r_max, count)


def translation_weight(window: Window, offset) -> np.ndarray:
    """``1 / area(W intersect (W + offset))`` on a rectangle."""
    offset = np.atleast_2d(offset)
    ax = window.width - np.abs(offset[:, 0])
    ay = window.height - np.abs(offset[:, 1])
    with np.errstate(divide="ignore"):
        return np.where((ax > 0) & (ay > 0), 1.0 / (ax * ay), 0.0)


def k_inhom(pattern: PointPattern, model: LogLinearModel, field: CovariateField,
            window: Window | None = None, r_grid=None) -> KEstimate:
    """Intensity-reweighted K-function with translation edge correction.

    ``K(r) = sum_{u != v} 1(|u - v| <= r) e(u, v) / (rho(u) rho(v))`` over
    ordered pairs.
    """
    window = window or pattern.window
    r_grid = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0) or r_grid[0] < 0:
        raise ValueError("r_grid must be increasing and non-negative")
    n = len(pattern)
    if n < 2:
        raise ValueError("K-function estimation needs at least two points")
    pts = pattern.points
    rho = np.asarray(intensity_at(model, field, pts), dtype=float).reshape(-1)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise ValueError("intensity must be positive and finite at every point")
    pairs = cKDTree(pts).query_pairs(r_grid[-1], output_type="ndarray")
    if len(pairs) == 0:
        return KEstimate(r_grid, np.zeros_like(r_grid), rho)
    i, j = pairs[:, 0], pairs[:, 1]
    off = pts[j] - pts[i]
    dist = np.hypot(off[:, 0], off[:, 1])
    contrib = 2.0 * translation_weight(window, off) / (rho[i] * rho[j])
    order = np.argsort(dist, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(contrib[order])])
    k_hat = cum[np.searchsorted(dist[order], r_grid, side="right")]
    return KEstimate(r_grid, k_hat, rho)


def _contrast(k_est, r, k_hat_b, b):
    def f(x):
        K = thomas_K(ThomasParams(np.exp(x[0]), np.exp(x[1])), r)
        return float(integrate.trapezoid((K**b - k_hat_b) ** 2, r))
    return f


def min_contrast_thomas(k_est: KEstimate, r_min: float = 0.0, r_max: float = 25.0, b: float = 0.25,
                        n_restarts: int = 5, coarse: int = 8) -> ThomasParams:
    """Fit ``(kappa, sigma)`` by minimizing the trapezoid contrast of ``K^b``.

    L-BFGS-B over ``(log kappa, log sigma)`` starts from the ``n_restarts``
    best points of a ``coarse x coarse`` grid on the search box; the result is
    never worse than any grid point.
    """
    if not r_max > r_min >= 0:
        raise ValueError("need r_max > r_min >= 0")
    if not b > 0:
        raise ValueError("exponent b must be positive")
    sel = (k_est.r_grid >= r_min) & (k_est.r_grid <= r_max)
    r = k_est.r_grid[sel]
    if len(r) < 2:
        raise ValueError("fewer than two r values inside [r_min, r_max]")
    f = _contrast(k_est, r, np.maximum(k_est.k_hat[sel], 0.0) ** b, b)
    bounds = [LOG_KAPPA_BOUNDS, LOG_SIGMA_BOUNDS]
    lk = np.linspace(*LOG_KAPPA_BOUNDS, coarse)
    ls = np.linspace(*LOG_SIGMA_BOUNDS, coarse)
    grid = np.array([(a, c) for a in lk for c in ls])
    vals = np.array([f(x) for x in grid])
    best_x, best_f = grid[np.argmin(vals)], vals.min()
    n_ok = 0
    for x0 in grid[np.argsort(vals, kind="stable")[:n_restarts]]:
        try:
            res = optimize.minimize(f, x0, method="L-BFGS-B", bounds=bounds,
                                    options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000})
        except (ValueError, FloatingPointError) as err:
            log.info("restart from %s failed: %s", x0, err)
            continue
        if np.isfinite(res.fun):
            n_ok += 1
            if res.fun < best_f:
                best_x, best_f = res.x, res.fun
    if n_ok == 0:
        raise ArithmeticError("minimum contrast failed from every restart")
    return ThomasParams(float(np.exp(best_x[0])), float(np.exp(best_x[1])))


def two_step_fit(pattern: PointPattern, field: CovariateField, window: Window, model: LogLinearModel,
                 r_max: float = 25.0, b: float = 0.25, coarsen: int = 2) -> SecondOrderSpec:
    """Estimated Thomas pair-correlation given a first-step intensity ``model``."""
    k_est = k_inhom(pattern, model, field, window, default_r_grid(r_max))
    params = min_contrast_thomas(k_est, 0.0, r_max, b)
    return SecondOrderSpec.thomas(params, coarsen)
