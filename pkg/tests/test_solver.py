from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from stabpp.likelihood import NumericalError, fit_unpenalized, loglik, score
from stabpp.simulate import LogLinearModel
from stabpp.solver import (
    L0,
    L1,
    ZERO_COEF_WEIGHT,
    PathConfig,
    PenaltySpec,
    adaptive_path,
    adaptive_weights,
    bb_step,
    log_grid,
    pgd_solve,
    prox_hard,
    prox_soft,
    solve_path,
)

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=200)
@given(finite, st.floats(0, 20))
def test_prox_hard_minimizes_l0_objective(x, t):
    # t = gamma * lambda * w; brute force over a grid plus the two candidates
    z = float(prox_hard(x, np.sqrt(2 * t)))
    grid = np.concatenate([np.linspace(-60, 60, 4001), [x, 0.0]])
    obj = 0.5 * (grid - x) ** 2 + t * (grid != 0)
    assert 0.5 * (z - x) ** 2 + t * (z != 0) <= obj.min() + 1e-12
    assert z in (0.0, x)


@settings(max_examples=200)
@given(finite, st.floats(0, 20))
def test_prox_soft_minimizes_l1_objective(x, s):
    z = float(prox_soft(x, s))
    res = optimize.minimize_scalar(lambda u: 0.5 * (u - x) ** 2 + s * abs(u), bounds=(-60, 60),
                                   method="bounded", options={"xatol": 1e-10})
    assert z == pytest.approx(res.x, abs=1e-6)


def test_prox_ties_go_to_zero():
    assert prox_hard(2.0, 2.0) == 0.0
    assert prox_soft(-1.0, 1.0) == 0.0


def test_bb_step_and_clamp():
    assert bb_step([1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.5)
    assert bb_step([1e6], [1.0]) == 1e2
    assert bb_step([1e-12], [1.0]) == 1e-8
    assert bb_step([1.0], [0.0], previous=0.3) == 0.3


def test_adaptive_weights():
    w = adaptive_weights([2.0, -0.5, 0.0])
    assert w.tolist() == [0.5, 2.0, ZERO_COEF_WEIGHT]


def test_config_validation():
    with pytest.raises(ValueError):
        PathConfig(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        PathConfig(np.array([1.0]), step="newton")
    with pytest.raises(ValueError):
        PenaltySpec("L2", 1.0, np.ones(2))
    assert PathConfig(np.array([1.0])).step_for(L1) == ("bb", 1e-4)
    assert PathConfig(np.array([1.0])).step_for(L0) == ("fixed", 1e-3)
    g = log_grid(500, 1e-4, 35)
    assert g[0] == 500 and g[-1] == pytest.approx(1e-4) and np.allclose(np.diff(np.log(g)), np.log(g[1] / g[0]))


def l1_oracle(fit, lam, w):
    """Maximize the L1-penalized likelihood with L-BFGS-B on split variables beta = a - b."""
    p = fit.p

    def f(z):
        theta = np.concatenate([[z[0]], z[1:p + 1] - z[p + 1:]])
        m = LogLinearModel.from_vector(theta)
        g = score(fit, m)
        val = -loglik(fit, m) + lam * w @ (z[1:p + 1] + z[p + 1:])
        grad = np.concatenate([[-g[0]], -g[1:] + lam * w, g[1:] + lam * w])
        return val, grad

    z0 = np.zeros(2 * p + 1)
    z0[0] = np.log(fit.n_points / fit.weights.sum())
    bounds = [(None, None)] + [(0, None)] * (2 * p)
    res = optimize.minimize(f, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 10000})
    return np.concatenate([[res.x[0]], res.x[1:p + 1] - res.x[p + 1:]]), res.fun


@pytest.mark.parametrize("lam", [0.5, 5.0, 40.0])
def test_l1_pgd_matches_lbfgs_oracle(small_fit, lam):
    fit, model, _ = small_fit
    w = adaptive_weights(fit_unpenalized(fit).beta)
    init = LogLinearModel(model.log_omega, np.zeros(fit.p))
    cfg = PathConfig(np.array([lam]), tol=1e-10, max_iter=20000)
    got, conv, _ = pgd_solve(fit, PenaltySpec(L1, lam, w), init, cfg)
    ref, ref_obj = l1_oracle(fit, lam, w)
    obj = -loglik(fit, got) + lam * w @ np.abs(got.beta)
    assert conv
    assert obj <= ref_obj + 1e-6
    assert np.allclose(got.vector(), ref, atol=1e-4)
    assert np.array_equal(got.beta != 0, np.abs(ref[1:]) > 1e-6)


def test_l0_fixed_point_conditions(small_fit):
    fit, model, _ = small_fit
    lam = 2.0
    w = adaptive_weights(fit_unpenalized(fit).beta)
    cfg = PathConfig(np.array([lam]), tol=1e-12, max_iter=20000)
    got, _, _ = pgd_solve(fit, PenaltySpec(L0, lam, w), LogLinearModel(model.log_omega, np.zeros(fit.p)), cfg)
    g = score(fit, got)
    on = got.beta != 0
    gamma = 1e-3
    assert abs(g[0]) < 1e-3
    assert np.all(np.abs(g[1:][on]) < 1e-3)
    # off-support coordinates stay below the hard threshold after one step
    assert np.all((gamma * g[1:][~on]) ** 2 <= 2 * gamma * lam * w[~on] + 1e-12)
    assert on[0] and not on[2:].any()


def test_path_is_sparse_at_top_and_dense_at_bottom(small_fit):
    fit, _, pattern = small_fit
    cfg = PathConfig(log_grid(1e4, 1e-4, 15))
    for kind in (L0, L1):
        path, pilot = adaptive_path(fit, kind, cfg)
        assert not path.supports[0].any()
        assert path.coefs[0, 0] == pytest.approx(np.log(len(pattern) / fit.weights.sum()), abs=1e-3)
        assert path.supports[-1][:2].all()
        assert np.allclose(path.coefs[-1], pilot.vector(), atol=5e-3)
        assert path.converged.all()


def test_fixed_step_divergence_raises(small_fit):
    fit, _, _ = small_fit
    cfg = PathConfig(np.array([1.0]), step="fixed", gamma0=50.0)
    with pytest.raises(NumericalError):
        solve_path(fit, L0, np.ones(fit.p), cfg)


def test_empty_pattern_path_raises(small_fit):
    fit, _, _ = small_fit
    with pytest.raises(NumericalError):
        solve_path(replace(fit, n_points=0), L1, np.ones(fit.p), PathConfig(np.array([1.0])))
