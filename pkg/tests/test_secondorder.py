import numpy as np
import pytest

from stabpp.geometry import PointPattern, Window, synth_covariates
from stabpp.secondorder import KEstimate, default_r_grid, k_inhom, min_contrast_thomas, translation_weight, two_step_fit
from stabpp.simulate import LogLinearModel, ThomasParams, calibrate_intercept, sample_thomas, stream, thomas_K


def brute_k(points, rho, window, r_grid):
    out = np.zeros_like(r_grid)
    for a in range(len(points)):
        for b in range(len(points)):
            if a == b:
                continue
            off = points[b] - points[a]
            e = 1.0 / ((window.width - abs(off[0])) * (window.height - abs(off[1])))
            out += (np.hypot(*off) <= r_grid) * e / (rho[a] * rho[b])
    return out


def test_translation_weight_rectangle():
    w = Window(0, 10, 0, 4)
    assert translation_weight(w, [0.0, 0.0])[0] == pytest.approx(1 / 40)
    assert translation_weight(w, [-3.0, 1.0])[0] == pytest.approx(1 / (7 * 3))
    assert translation_weight(w, [10.0, 0.0])[0] == 0.0


def test_k_inhom_matches_brute_force():
    field = synth_covariates(2, 2, grid=(20, 10), window=Window(0, 100, 0, 50))
    model = LogLinearModel(-3.0, [0.4, -0.3])
    pts = stream(1).uniform([0, 0], [100, 50], (60, 2))
    pat = PointPattern(pts, field.extent)
    r = default_r_grid(20.0, 41)
    est = k_inhom(pat, model, field, r_grid=r)
    rho = np.exp(model.log_intensity(field.at(pts)))
    assert np.allclose(est.k_hat, brute_k(pts, rho, field.extent, r), rtol=1e-12)
    assert np.allclose(est.intensity_used, rho)


def test_k_inhom_validation():
    field = synth_covariates(2, 1, grid=(10, 5), window=Window(0, 10, 0, 5))
    model = LogLinearModel(0.0, [0.0])
    with pytest.raises(ValueError):
        k_inhom(PointPattern([[1, 1]], field.extent), model, field)
    with pytest.raises(ValueError):
        k_inhom(PointPattern([[1, 1], [2, 2]], field.extent), model, field, r_grid=[0, 2, 1])


@pytest.mark.parametrize("kappa,sigma", [(4e-3, 1.5), (2e-2, 3.0), (1e-3, 0.8)])
def test_min_contrast_recovers_exact_k(kappa, sigma):
    r = default_r_grid(25.0)
    est = KEstimate(r, thomas_K(ThomasParams(kappa, sigma), r), np.ones(1))
    got = min_contrast_thomas(est)
    assert got.kappa == pytest.approx(kappa, rel=1e-4)
    assert got.sigma == pytest.approx(sigma, rel=1e-4)


def test_min_contrast_poisson_k_hits_kappa_bound():
    r = default_r_grid(25.0)
    got = min_contrast_thomas(KEstimate(r, np.pi * r**2, np.ones(1)))
    assert np.log(got.kappa) == pytest.approx(2.0, abs=1e-6)


def test_min_contrast_validation():
    r = default_r_grid(25.0)
    est = KEstimate(r, np.pi * r**2, np.ones(1))
    with pytest.raises(ValueError):
        min_contrast_thomas(est, r_min=5, r_max=5)
    with pytest.raises(ValueError):
        min_contrast_thomas(est, b=0)


def test_two_step_fit_returns_thomas_spec():
    field = synth_covariates(4, 2, grid=(101, 51))
    par = ThomasParams(4e-3, 1.5)
    model = calibrate_intercept(LogLinearModel(0.0, [1.0, 0.0]), field, field.extent, 1500)
    pat = sample_thomas(model, par, field, field.extent, stream(9))
    spec = two_step_fit(pat, field, field.extent, model)
    assert spec.params is not None and spec.pcf(0.0) > 1
    # one realization: only the order of magnitude is identified
    assert 0.5 < spec.params.sigma < 5
    assert 1e-3 < spec.params.kappa < 2e-2
