"""Log-linear intensities and exact samplers for Poisson and Thomas processes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CovariateField, GeometryError, PointPattern, QuadratureScheme, Window, make_quadrature


@dataclass(frozen=True)
class ThomasParams:
    """Parent intensity ``kappa`` and Gaussian dispersion ``sigma``."""

    kappa: float
    sigma: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.sigma > 0):
            raise ValueError(f"Thomas parameters must be positive, got {self}")


@dataclass(frozen=True)
class LogLinearModel:
    """``rho(u) = exp(log_omega + beta . z(u))``."""

    log_omega: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        if not (np.isfinite(self.log_omega) and np.all(np.isfinite(beta))):
            raise ValueError("model coefficients must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "log_omega", float(self.log_omega))

    @classmethod
    def from_vector(cls, theta) -> "LogLinearModel":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1:])

    @property
    def omega(self) -> float:
        return float(np.exp(self.log_omega))

    @property
    def p(self) -> int:
        return len(self.beta)

    def vector(self) -> np.ndarray:
        """Coefficients as ``[log_omega, beta_1, ..., beta_p]``."""
        return np.concatenate([[self.log_omega], self.beta])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0)

    def log_intensity(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.p)
        return self.log_omega + z @ self.beta


def _quad(field: CovariateField, window) -> QuadratureScheme:
    if isinstance(window, QuadratureScheme):
        return window
    return make_quadrature(field, window)


def intensity_at(model: LogLinearModel, field: CovariateField, u) -> np.ndarray | float:
    """Intensity at one point or an ``(n, 2)`` array of points."""
    u_arr = np.asarray(u, dtype=float)
    rho = np.exp(model.log_intensity(field.at(u_arr)))
    return float(rho[0]) if u_arr.ndim == 1 else rho


def expected_count(model: LogLinearModel, field: CovariateField, window) -> float:
    """Quadrature approximation of the integral of the intensity over ``window``."""
    q = _quad(field, window)
    return float(q.weights @ np.exp(model.log_intensity(q.covariates)))


def calibrate_intercept(
    model: LogLinearModel, field: CovariateField, window, target_count: float
) -> LogLinearModel:
    """Shift ``log_omega`` so the expected count over ``window`` is ``target_count``."""
    if not target_count > 0:
        raise ValueError("target_count must be positive")
    q = _quad(field, window)
    eta = q.covariates @ model.beta
    shift = eta.max()
    log_mass = np.log(q.weights @ np.exp(eta - shift)) + shift
    return LogLinearModel(np.log(target_count) - log_mass, model.beta)


def _rho_max(model, field, q):
    return float(np.exp(model.log_intensity(q.covariates).max()))


def sample_poisson(model: LogLinearModel, field: CovariateField, window: Window, rng) -> PointPattern:
    """Inhomogeneous Poisson pattern by thinning a dominating homogeneous process."""
    q = _quad(field, window)
    window = q.window
    lam = _rho_max(model, field, q)
    n = rng.poisson(lam * window.area)
    xy = np.column_stack([
        rng.uniform(window.x_min, window.x_max, n),
        rng.uniform(window.y_min, window.y_max, n),
    ])
    accept = rng.uniform(size=n) * lam < intensity_at(model, field, xy)
    return PointPattern(xy[accept], window)


def sample_thomas(
    model: LogLinearModel, params: ThomasParams, field: CovariateField, window: Window, rng
) -> PointPattern:
    """Inhomogeneous Thomas pattern with first-order intensity ``model``.

    Parents are homogeneous Poisson at rate ``kappa`` on ``window`` dilated by
    ``4 sigma``. Each parent spawns a Poisson number of Gaussian daughters
    from the envelope ``rho_max * N(u; v, sigma^2) / kappa``, thinned with
    probability ``rho(u) / rho_max``. Daughters outside ``window`` are dropped.
    """
    q = _quad(field, window)
    window = q.window
    lam = _rho_max(model, field, q)
    outer = window.dilate(4 * params.sigma)
    n_par = rng.poisson(params.kappa * outer.area)
    parents = np.column_stack([
        rng.uniform(outer.x_min, outer.x_max, n_par),
        rng.uniform(outer.y_min, outer.y_max, n_par),
    ])
    n_kids = rng.poisson(lam / params.kappa, n_par)
    xy = np.repeat(parents, n_kids, axis=0) + params.sigma * rng.standard_normal((n_kids.sum(), 2))
    u = rng.uniform(size=len(xy))
    inside = window.contains(xy)
    xy, u = xy[inside], u[inside]
    accept = u * lam < intensity_at(model, field, xy)
    return PointPattern(xy[accept], window)


def thomas_pcf(params: ThomasParams, r):
    """Pair-correlation function ``1 + exp(-r^2 / 4 sigma^2) / (4 pi kappa sigma^2)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be non-negative")
    s2 = params.sigma**2
    out = 1.0 + np.exp(-(r**2) / (4 * s2)) / (4 * np.pi * params.kappa * s2)
    return float(out) if out.ndim == 0 else out


def thomas_K(params: ThomasParams, r):
    """K-function ``pi r^2 + (1 - exp(-r^2 / 4 sigma^2)) / kappa``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be non-negative")
    out = np.pi * r**2 - np.expm1(-(r**2) / (4 * params.sigma**2)) / params.kappa
    return float(out) if out.ndim == 0 else out


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


__all__ = [
    "GeometryError",
    "LogLinearModel",
    "ThomasParams",
    "calibrate_intercept",
    "expected_count",
    "intensity_at",
    "sample_poisson",
    "sample_thomas",
    "stream",
    "thomas_K",
    "thomas_pcf",
]
