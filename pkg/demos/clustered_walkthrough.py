"""Thomas process: K-function, minimum contrast, and the composite BIC.

Run with ``python demos/clustered_walkthrough.py``.
"""

import numpy as np

from stabpp import (
    L1, LogLinearModel, PathConfig, SecondOrderSpec, ThomasParams, adaptive_path, build_fit_data,
    calibrate_intercept, sample_thomas, select_by_criterion, stream, synth_covariates,
)
from stabpp.geometry import erode
from stabpp.secondorder import k_inhom, min_contrast_thomas
from stabpp.solver import log_grid


def main():
    field = synth_covariates(seed=0, p=15)
    params = ThomasParams(4e-3, 1.5)
    beta = np.zeros(15)
    beta[:2] = (2.0, 0.75)
    truth = calibrate_intercept(LogLinearModel(0.0, beta), field, field.extent, 500)
    pattern = sample_thomas(truth, params, field, field.extent, stream(3))
    print(f"{len(pattern)} points")

    k_est = k_inhom(pattern, truth, field)
    for r in (2.0, 5.0, 10.0):
        i = np.searchsorted(k_est.r_grid, r)
        print(f"K({k_est.r_grid[i]:.1f}) = {k_est.k_hat[i]:8.1f}   (Poisson: {np.pi * k_est.r_grid[i] ** 2:8.1f})")
    est = min_contrast_thomas(k_est)
    print(f"minimum contrast: kappa={est.kappa:.2e} sigma={est.sigma:.2f}  (true 4.0e-03, 1.50)")

    window = erode(field.extent, 4 * params.sigma)
    fit = build_fit_data(pattern.restrict(window), field, window)
    path, _ = adaptive_path(fit, L1, PathConfig(log_grid(1e3, 1e-3, 35)))
    for kind, spec in (("BIC", None), ("cBIC", SecondOrderSpec.thomas(est))):
        res = select_by_criterion(path, fit, kind, spec)
        print(f"{kind:5s} -> support {res.support.tolist()}")


if __name__ == "__main__":
    main()
