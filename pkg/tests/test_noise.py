import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from stabpp.geometry import PointPattern, Window
from stabpp.noise import DISPLACEMENT, HARDCORE, NoiseSpec, apply_noise, displace, hardcore_thin, p_thin
from stabpp.simulate import stream

W = Window(0, 100, 0, 100)


def test_spec_validation():
    assert NoiseSpec(DISPLACEMENT, 2.0, 5.0).delta == 10.0
    with pytest.raises(ValueError):
        NoiseSpec("blur", 1.0, 1.0)
    with pytest.raises(ValueError):
        NoiseSpec(HARDCORE, -1.0, 1.0)
    with pytest.raises(ValueError):
        displace(PointPattern([[1, 1]], W), NoiseSpec(HARDCORE, 1.0, 1.0), stream(0))


def test_zero_noise_is_identity():
    pat = PointPattern(stream(0).uniform(0, 100, (50, 2)), W)
    for kind in (DISPLACEMENT, HARDCORE):
        assert apply_noise(pat, NoiseSpec(kind, 0.0, 1.0), stream(1)) is pat


def test_displacement_is_rayleigh():
    pts = np.full((20000, 2), 50.0)
    spec = NoiseSpec(DISPLACEMENT, 0.5, 2.0)
    moved = displace(PointPattern(pts, W), spec, stream(2))
    dist = np.hypot(*(moved.points - 50.0).T)
    assert len(moved) == len(pts)
    assert dist.mean() == pytest.approx(spec.delta * np.sqrt(np.pi / 2), rel=0.02)


def test_displacement_drops_points_leaving_window():
    pts = np.full((4000, 2), [0.0, 50.0])
    moved = displace(PointPattern(pts, W), NoiseSpec(DISPLACEMENT, 1.0, 1.0), stream(3))
    assert len(moved) == pytest.approx(2000, abs=150)
    assert np.all(W.contains(moved.points))


@pytest.mark.parametrize("radius", ["scalar", "norm"])
def test_hardcore_two_points(radius):
    D, delta = 1.0, 1.2
    spec = NoiseSpec(HARDCORE, delta, 1.0, radius)
    pat = PointPattern([[10.0, 10.0], [10.0 + D, 10.0]], W)
    kept = np.mean([len(hardcore_thin(pat, spec, stream(4, i))) for i in range(20000)])
    if radius == "scalar":
        expect = 1 + erf(D / (delta * np.sqrt(2)))
    else:
        expect = 2 - np.exp(-(D**2) / (2 * delta**2))
    assert kept == pytest.approx(expect, abs=0.015)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0))
def test_hardcore_returns_nonempty_subset(seed, c):
    rng = stream(seed)
    pts = np.column_stack([np.arange(10) * 10.0 + 5, np.full(10, 50.0)])
    pts = np.vstack([pts, rng.uniform(0, 100, (30, 2))])
    pat = PointPattern(pts, W)
    out = hardcore_thin(pat, NoiseSpec(HARDCORE, c, 0.1), stream(seed, 1))
    assert set(map(tuple, out.points)) <= set(map(tuple, pts))
    assert len(out) >= 1


def test_p_thin_binomial():
    pat = PointPattern(stream(5).uniform(0, 100, (10000, 2)), W)
    assert len(p_thin(pat, 0.3, stream(6))) == pytest.approx(3000, abs=4 * np.sqrt(10000 * 0.21))
    assert p_thin(pat, 1.0, stream(6)) is pat
    with pytest.raises(ValueError):
        p_thin(pat, 0.0, stream(6))
