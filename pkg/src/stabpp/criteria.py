"""BIC, ERIC and their composite versions with effective degrees of freedom.

For a refit model on support ``A`` (intercept included) the composite
criteria replace the parameter count ``k`` by ``k + tr(S^{-1} T2)`` where
``S`` is the negative Hessian of the log-likelihood and ``T2`` the
second-order correction::

    T2 = sum_{u, v} x_u x_v^T rho_u rho_v (g(|u - v|) - 1) w_u w_v

over a coarsened quadrature lattice. Because ``g`` depends on the lattice
offset only, ``T2`` is computed with one FFT convolution per active column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy.signal import fftconvolve

from .likelihood import DegenerateDataError, FitData, NumericalError, fit_unpenalized, loglik
from .simulate import LogLinearModel, ThomasParams, thomas_pcf
from .solver import PathResult
from .stability import SelectionResult

log = logging.getLogger(__name__)

BIC, ERIC, CBIC, CERIC = "BIC", "ERIC", "cBIC", "cERIC"
KINDS = (BIC, ERIC, CBIC, CERIC)


@dataclass(frozen=True)
class CriterionValue:
    kind: str
    value: float
    df: float
    lam: float
    flags: tuple = ()


@dataclass(frozen=True)
class SecondOrderSpec:
    """Pair-correlation function for the composite corrections.

    ``pcf=None`` stands for the Poisson case ``g == 1``, for which ``T2`` is
    exactly zero and no convolution is performed.
    """

    pcf: Optional[Callable] = None
    coarsen: int = 2
    params: Optional[ThomasParams] = None

    def __post_init__(self):
        if int(self.coarsen) != self.coarsen or self.coarsen < 1:
            raise ValueError("coarsen must be a positive integer")

    @classmethod
    def poisson(cls, coarsen: int = 2) -> "SecondOrderSpec":
        return cls(None, coarsen)

    @classmethod
    def thomas(cls, params: ThomasParams, coarsen: int = 2) -> "SecondOrderSpec":
        return cls(lambda r: thomas_pcf(params, r), coarsen, params)


def _active(model: LogLinearModel) -> np.ndarray:
    return np.concatenate([[0], 1 + model.support()])


def sensitivity(fit: FitData, model: LogLinearModel) -> np.ndarray:
    """Negative Hessian of the log-likelihood on the intercept and the support of ``model``."""
    cols = _active(model)
    H = fit.kernel.hessian(fit.p_thin_factor, model.vector(), cols)
    if not np.all(np.isfinite(H)):
        raise NumericalError("sensitivity matrix is not finite")
    try:
        linalg.cho_factor(H)
    except linalg.LinAlgError as err:
        raise DegenerateDataError("sensitivity matrix is singular on this support") from err
    return H


def _coarse_blocks(a, shape, c):
    ny, nx = shape
    grid = a.reshape(ny, nx)
    py, px = -ny % c, -nx % c
    if py or px:
        grid = np.pad(grid, ((0, py), (0, px)))
    return grid.reshape((ny + py) // c, c, (nx + px) // c, c).sum(axis=(1, 3))


def t2_matrix(fit: FitData, model: LogLinearModel, spec: SecondOrderSpec) -> np.ndarray:
    """Second-order correction on the active columns of ``model``.

    Nodes are summed over ``coarsen x coarsen`` blocks; block ``(i, j)`` sits
    at lattice offset ``(j c dx, i c dy)`` from block ``(0, 0)``.  The
    diagonal ``u = v`` term is included.
    """
    cols = _active(model)
    d = len(cols)
    if spec.pcf is None:
        return np.zeros((d, d))
    q = fit.quadrature
    c = int(spec.coarsen)
    rho = np.exp(fit.design @ model.vector())
    mass = fit.design[:, cols] * (rho * q.weights)[:, None]
    blocks = [_coarse_blocks(mass[:, a], q.grid_shape, c) for a in range(d)]
    my, mx = blocks[0].shape
    dx, dy = q.spacing
    oy = np.arange(-(my - 1), my) * c * dy
    ox = np.arange(-(mx - 1), mx) * c * dx
    r = np.hypot(oy[:, None], ox[None, :])
    kernel = np.asarray(spec.pcf(r), dtype=float) - 1.0
    if np.any(kernel < -1 - 1e-12):
        raise ValueError("pair-correlation function must be non-negative")
    conv = [fftconvolve(b, kernel, mode="same") for b in blocks]
    T2 = np.array([[np.sum(blocks[a] * conv[b]) for b in range(d)] for a in range(d)])
    return (T2 + T2.T) / 2


def effective_df(S, T2, k: int) -> float:
    """``k + tr(S^{-1} T2)``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    T2 = np.atleast_2d(np.asarray(T2, dtype=float))
    if not np.any(T2):
        return float(k)
    try:
        sol = linalg.solve(S, T2, assume_a="sym")
    except linalg.LinAlgError as err:
        raise DegenerateDataError("sensitivity matrix is singular") from err
    return float(k + np.trace(sol))


def _multiplier(kind, n, lam):
    if n < 1:
        raise DegenerateDataError("criteria need at least one observed point")
    if kind in (BIC, CBIC):
        return np.log(n), ()
    if not lam > 0:
        raise ValueError("ERIC needs lambda > 0")
    mult = np.log(n / lam)
    return mult, (("nonpositive_multiplier",) if mult <= 0 else ())


def criterion(kind: str, fit: FitData, model: LogLinearModel, lam: float, df: float | None = None,
              spec: SecondOrderSpec | None = None) -> CriterionValue:
    """Evaluate ``-2 loglik + df * multiplier`` at ``model``.

    ``df`` defaults to the active count (plain criteria) or to
    :func:`effective_df` with ``spec`` (composite criteria).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown criterion {kind!r}")
    k = len(_active(model))
    if df is None:
        if kind in (CBIC, CERIC):
            spec = spec or SecondOrderSpec.poisson()
            T2 = t2_matrix(fit, model, spec)
            df = effective_df(sensitivity(fit, model), T2, k) if np.any(T2) else float(k)
        else:
            df = float(k)
    mult, flags = _multiplier(kind, fit.n_points, lam)
    value = -2.0 * loglik(fit, model) + df * mult
    if not np.isfinite(value):
        raise NumericalError(f"{kind} is not finite")
    return CriterionValue(kind, float(value), float(df), float(lam), flags)


def bic(fit, model, lam, df=None):
    return criterion(BIC, fit, model, lam, df)


def eric(fit, model, lam, df=None):
    return criterion(ERIC, fit, model, lam, df)


def cbic(fit, model, lam, df=None, spec=None):
    return criterion(CBIC, fit, model, lam, df, spec)


def ceric(fit, model, lam, df=None, spec=None):
    return criterion(CERIC, fit, model, lam, df, spec)


def select_by_criterion(path: PathResult, fit: FitData, kind: str,
                        spec: SecondOrderSpec | None = None, refits: dict | None = None) -> SelectionResult:
    """Refit each path support, score it, and return the minimizer.

    Ties go to the larger lambda. Supports whose refit fails are skipped.
    ``refits`` may be shared between calls on the same data to reuse fits.
    """
    if len(path.lambdas) == 0:
        raise ValueError("empty path")
    refits = {} if refits is None else refits
    scores = np.full(len(path.lambdas), np.inf)
    values = []
    for m, lam in enumerate(path.lambdas):
        key = tuple(np.flatnonzero(path.supports[m]))
        if key not in refits:
            try:
                refits[key] = fit_unpenalized(fit, support=np.array(key, dtype=int))
            except (DegenerateDataError, NumericalError) as err:
                log.info("refit on support %s failed: %s", key, err)
                refits[key] = None
        model = refits[key]
        if model is None:
            values.append(None)
            continue
        try:
            cv = criterion(kind, fit, model, lam, spec=spec)
        except (DegenerateDataError, NumericalError) as err:
            log.info("criterion at lambda %g failed: %s", lam, err)
            values.append(None)
            continue
        scores[m] = cv.value
        values.append(cv)
    if not np.isfinite(scores).any():
        raise DegenerateDataError("every refit along the path is degenerate")
    best = int(np.flatnonzero(scores <= scores.min())[0])  # lambdas decrease, so first = largest
    key = tuple(np.flatnonzero(path.supports[best]))
    model = refits[key]
    # exact zeros off the support
    beta = np.zeros(model.p)
    beta[list(key)] = model.beta[list(key)]
    return SelectionResult(
        support=np.array(key, dtype=int),
        coefficients=LogLinearModel(model.log_omega, beta),
        diagnostics={
            "criterion": kind,
            "lambda": float(path.lambdas[best]),
            "index": best,
            "values": [None if v is None else v.value for v in values],
            "df": [None if v is None else v.df for v in values],
            "flags": sorted({f for v in values if v is not None for f in v.flags}),
        },
    )
