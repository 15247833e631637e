import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabpp.geometry import (
    CovariateField,
    EmptyQuadratureError,
    GeometryError,
    PointPattern,
    Window,
    ZeroVarianceError,
    erode,
    make_quadrature,
    read_covariates_csv,
    read_pattern_csv,
    standardize,
    synth_covariates,
    write_covariates_csv,
    write_pattern_csv,
)


def test_window_basics():
    w = Window(0, 250, 0, 125)
    assert w.area == 250 * 125
    assert list(w.contains([[0, 0], [250, 125], [251, 3]])) == [True, True, False]
    with pytest.raises(GeometryError):
        Window(1, 1, 0, 2)


def test_erode_and_dilate():
    w = Window(0, 250, 0, 125)
    e = erode(w, 6)
    assert (e.x_min, e.x_max, e.y_min, e.y_max) == (6, 244, 6, 119)
    assert w.dilate(6).area == pytest.approx(262 * 137)
    with pytest.raises(GeometryError):
        erode(w, 62.5)


def test_standardize_moments_and_zero_variance():
    rng = np.random.default_rng(0)
    f = standardize(CovariateField(rng.normal(3, 2, (2, 5, 7)), 1.0, 1.0))
    assert np.allclose(f.flat().mean(axis=0), 0, atol=1e-12)
    assert np.allclose(f.flat().std(axis=0), 1)
    const = np.ones((2, 5, 7))
    const[0] = rng.normal(size=(5, 7))
    with pytest.raises(ZeroVarianceError):
        standardize(CovariateField(const, 1.0, 1.0))


def test_cell_lookup():
    f = CovariateField(np.arange(12.0).reshape(1, 3, 4), 2.0, 1.0)
    assert f.cell_index([[0.5, 0.5], [7.9, 2.9], [8.0, 3.0]]).tolist() == [0, 11, 11]
    assert f.at([3.0, 1.5])[0, 0] == 5.0
    with pytest.raises(GeometryError):
        f.cell_index([[8.5, 1.0]])


def test_quadrature_covers_window_exactly():
    f = synth_covariates(0, 2, grid=(20, 10))
    q = make_quadrature(f, f.extent)
    assert q.n_nodes == 200
    assert q.weights.sum() == pytest.approx(250 * 125)
    assert q.grid_shape == (10, 20)
    assert np.allclose(q.covariates, f.flat())


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0, 100), st.floats(1, 140), st.floats(0, 50), st.floats(1, 70)
)
def test_quadrature_weights_sum_to_area(x0, w, y0, h):
    f = synth_covariates(0, 1, grid=(25, 13), smoothness=5.0)
    win = Window(x0, min(x0 + w, 250), y0, min(y0 + h, 125))
    q = make_quadrature(f, win)
    assert q.weights.sum() == pytest.approx(win.area, rel=1e-12)
    assert np.all(win.contains(q.nodes))


def test_quadrature_errors():
    f = synth_covariates(0, 1, grid=(10, 5))
    with pytest.raises(EmptyQuadratureError):
        make_quadrature(f, Window(300, 400, 0, 10))
    with pytest.raises(GeometryError):
        make_quadrature(f, Window(-10, 100, 0, 10))


def test_synth_is_deterministic_and_standardized():
    a = synth_covariates(5, 3, grid=(30, 15))
    b = synth_covariates(5, 3, grid=(30, 15))
    c = synth_covariates(6, 3, grid=(30, 15))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values.shape == (3, 15, 30)
    assert np.allclose(a.flat().std(axis=0), 1)


def test_pattern_validation():
    w = Window(0, 10, 0, 10)
    p = PointPattern([[1, 2], [3, 4]], w)
    assert len(p) == 2
    assert len(p.restrict(Window(0, 2, 0, 5))) == 1
    with pytest.raises(GeometryError):
        PointPattern([[11, 2]], w)


def test_csv_round_trips(tmp_path):
    f = synth_covariates(1, 2, grid=(12, 6))
    write_covariates_csv(f, tmp_path / "cov.csv")
    g = read_covariates_csv(tmp_path / "cov.csv")
    assert g.names == f.names
    assert np.allclose(g.values, f.values)
    assert (g.dx, g.dy) == pytest.approx((f.dx, f.dy))
    ext = lambda w: [w.x_min, w.x_max, w.y_min, w.y_max]  # noqa: E731
    assert np.allclose(ext(g.extent), ext(f.extent))
    pat = PointPattern(np.array([[1.5, 2.25], [100.0, 50.0]]), f.extent)
    write_pattern_csv(pat, tmp_path / "pts.csv")
    back = read_pattern_csv(tmp_path / "pts.csv", f.extent)
    assert np.array_equal(back.points, pat.points)


def test_standardize_is_idempotent():
    f = synth_covariates(2, 3, grid=(40, 20))
    g = standardize(f)
    assert np.allclose(g.values, f.values, atol=1e-9)
    assert np.allclose(standardize(g).values, g.values, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 60))
def test_eroded_quadrature_area(margin):
    f = synth_covariates(0, 1, grid=(50, 25), smoothness=5.0)
    win = erode(f.extent, margin)
    assert make_quadrature(f, win).weights.sum() == pytest.approx(win.area, rel=1e-6)
