"""Observation noise (localization, detection) and independent p-thinning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointPattern

DISPLACEMENT = "displacement"
HARDCORE = "hardcore_thinning"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise of magnitude ``c`` in units of grid spacing ``dx``.

    ``radius`` selects how the hardcore cutoff is drawn: ``"scalar"`` uses
    ``|N(0, delta^2)|``, ``"norm"`` the length of a 2-d ``N(0, delta^2 I)``.
    """

    kind: str
    c: float
    dx: float
    radius: str = "scalar"

    def __post_init__(self):
        if self.kind not in (DISPLACEMENT, HARDCORE):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.c < 0 or not self.dx > 0:
            raise ValueError("need c >= 0 and dx > 0")
        if self.radius not in ("scalar", "norm"):
            raise ValueError(f"unknown radius mode {self.radius!r}")

    @property
    def delta(self) -> float:
        return self.c * self.dx


def displace(pattern: PointPattern, spec: NoiseSpec, rng) -> PointPattern:
    """Add i.i.d. Gaussian offsets with sd ``delta``; drop points that leave the window."""
    if spec.kind != DISPLACEMENT:
        raise ValueError("displace needs a displacement NoiseSpec")
    if spec.delta == 0:
        return pattern
    moved = pattern.points + spec.delta * rng.standard_normal(pattern.points.shape)
    return PointPattern(moved[pattern.window.contains(moved)], pattern.window)


def hardcore_thin(pattern: PointPattern, spec: NoiseSpec, rng) -> PointPattern:
    """Sequential distance-dependent thinning.

    Points are visited in a uniformly random order. Each draws a cutoff
    ``r_i`` and survives iff no previously retained point lies within ``r_i``.
    """
    if spec.kind != HARDCORE:
        raise ValueError("hardcore_thin needs a hardcore_thinning NoiseSpec")
    n = len(pattern)
    if spec.delta == 0 or n == 0:
        return pattern
    order = rng.permutation(n)
    if spec.radius == "scalar":
        radii = np.abs(spec.delta * rng.standard_normal(n))
    else:
        radii = np.hypot(*(spec.delta * rng.standard_normal((2, n))))
    pts = pattern.points
    tree = cKDTree(pts)
    keep = np.zeros(n, dtype=bool)
    for i, r in zip(order, radii):
        near = tree.query_ball_point(pts[i], r, p=2.0, return_sorted=False)
        # a point at distance exactly r is outside the open ball
        if not any(keep[j] and np.hypot(*(pts[j] - pts[i])) < r for j in near if j != i):
            keep[i] = True
    return pattern.subset(keep)


def apply_noise(pattern: PointPattern, spec: NoiseSpec, rng) -> PointPattern:
    if spec.kind == DISPLACEMENT:
        return displace(pattern, spec, rng)
    return hardcore_thin(pattern, spec, rng)


def p_thin(pattern: PointPattern, p_thin: float, rng) -> PointPattern:
    """Keep each point independently with probability ``p_thin``."""
    if not 0 < p_thin <= 1:
        raise ValueError(f"retention probability must lie in (0, 1], got {p_thin}")
    if p_thin == 1:
        return pattern
    return pattern.subset(rng.uniform(size=len(pattern)) < p_thin)
