import numpy as np
import pytest

from stabpp.criteria import (
    BIC,
    CBIC,
    ERIC,
    SecondOrderSpec,
    bic,
    cbic,
    ceric,
    criterion,
    effective_df,
    eric,
    select_by_criterion,
    sensitivity,
    t2_matrix,
)
from stabpp.geometry import Window, synth_covariates
from stabpp.likelihood import DegenerateDataError, build_fit_data, fit_unpenalized, loglik
from stabpp.simulate import LogLinearModel, ThomasParams, calibrate_intercept, sample_thomas, stream, thomas_pcf
from stabpp.solver import PathResult


@pytest.fixture(scope="module")
def tiny():
    field = synth_covariates(8, 2, grid=(15, 9), smoothness=3.0, window=Window(0, 60, 0, 36))
    par = ThomasParams(0.02, 2.0)
    model = calibrate_intercept(LogLinearModel(0.0, [0.8, 0.0]), field, field.extent, 150)
    pattern = sample_thomas(model, par, field, field.extent, stream(3))
    fit = build_fit_data(pattern, field, field.extent)
    return fit, fit_unpenalized(fit), par


def direct_t2(fit, model, pcf, c):
    """Explicit double sum over (coarsened) lattice cells."""
    q = fit.quadrature
    ny, nx = q.grid_shape
    dx, dy = q.spacing
    cols = np.concatenate([[0], 1 + model.support()])
    rho = np.exp(fit.design @ model.vector())
    mass = fit.design[:, cols] * (rho * q.weights)[:, None]
    iy, ix = np.divmod(np.arange(q.n_nodes), nx)
    by, bx = iy // c, ix // c
    keys = sorted(set(zip(by, bx)))
    agg = np.array([mass[(by == a) & (bx == b)].sum(axis=0) for a, b in keys])
    pos = np.array([(b * c * dx, a * c * dy) for a, b in keys])
    out = np.zeros((len(cols), len(cols)))
    for u in range(len(keys)):
        for v in range(len(keys)):
            r = np.hypot(*(pos[u] - pos[v]))
            out += np.outer(agg[u], agg[v]) * (pcf(r) - 1)
    return out


@pytest.mark.parametrize("coarsen", [1, 2, 4])
def test_t2_matches_double_sum(tiny, coarsen):
    fit, model, par = tiny
    spec = SecondOrderSpec.thomas(par, coarsen)
    got = t2_matrix(fit, model, spec)
    ref = direct_t2(fit, model, lambda r: thomas_pcf(par, r), coarsen)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_poisson_t2_is_zero(tiny):
    fit, model, _ = tiny
    assert not t2_matrix(fit, model, SecondOrderSpec.poisson()).any()
    assert effective_df(np.eye(3), np.zeros((3, 3)), 3) == 3.0


def test_effective_df_trace():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    T2 = np.array([[1.0, 0.2], [0.2, 0.5]])
    assert effective_df(S, T2, 2) == pytest.approx(2 + np.trace(np.linalg.inv(S) @ T2))


def test_sensitivity_is_negative_hessian_block(tiny):
    fit, model, _ = tiny
    S = sensitivity(fit, model)
    assert S.shape == (3, 3)
    assert np.allclose(S, fit.kernel.hessian(1.0, model.vector()))
    sub = LogLinearModel(model.log_omega, [model.beta[0], 0.0])
    assert sensitivity(fit, sub).shape == (2, 2)


def test_plain_criteria_values(tiny):
    fit, model, _ = tiny
    n, ll = fit.n_points, loglik(fit, model)
    assert bic(fit, model, 1.0).value == pytest.approx(-2 * ll + 3 * np.log(n))
    assert eric(fit, model, 2.0).value == pytest.approx(-2 * ll + 3 * np.log(n / 2.0))
    assert eric(fit, model, 10 * n).flags == ("nonpositive_multiplier",)
    with pytest.raises(ValueError):
        eric(fit, model, 0.0)
    with pytest.raises(ValueError):
        criterion("AIC", fit, model, 1.0)


def test_composite_criteria_exceed_plain_under_clustering(tiny):
    fit, model, par = tiny
    spec = SecondOrderSpec.thomas(par)
    cb = cbic(fit, model, 1.0, spec=spec)
    assert cb.df > 3
    assert cb.value > bic(fit, model, 1.0).value
    assert ceric(fit, model, 1.0, spec=spec).df == pytest.approx(cb.df)
    assert cbic(fit, model, 1.0).df == 3


def test_selection_minimizes_and_breaks_ties_to_larger_lambda(tiny):
    fit, model, _ = tiny
    full = model.vector()
    null = np.array([np.log(fit.n_points / fit.weights.sum()), 0.0, 0.0])
    one = full.copy()
    one[2] = 0.0
    coefs = np.array([null, one, one, full])
    path = PathResult(np.array([10.0, 1.0, 0.5, 0.1]), coefs, np.zeros(4, int), np.ones(4, bool), np.zeros(4))
    res = select_by_criterion(path, fit, BIC)
    vals = np.array(res.diagnostics["values"])
    assert res.diagnostics["index"] == int(np.flatnonzero(vals == vals.min())[0])
    assert vals[1] == vals[2]
    tie = PathResult(np.array([1.0, 0.5]), coefs[1:3], np.zeros(2, int), np.ones(2, bool), np.zeros(2))
    assert select_by_criterion(tie, fit, BIC).diagnostics["index"] == 0
    assert np.all(res.coefficients.beta[np.setdiff1d(np.arange(2), res.support)] == 0)
    refits = {}
    a = select_by_criterion(path, fit, ERIC, refits=refits)
    b = select_by_criterion(path, fit, CBIC, refits=refits)
    assert len(refits) == 3
    assert a.diagnostics["criterion"] == ERIC and b.diagnostics["criterion"] == CBIC


def test_singular_sensitivity_raises(tiny):
    fit, model, _ = tiny
    huge = LogLinearModel(-800.0, model.beta)
    with pytest.raises(DegenerateDataError):
        sensitivity(fit, huge)


def test_spec_validation():
    with pytest.raises(ValueError):
        SecondOrderSpec(None, 0)
