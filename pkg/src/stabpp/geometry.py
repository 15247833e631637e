"""Observation windows, raster covariates and midpoint quadrature.

Rasters are stored as arrays of shape ``(p, n_y, n_x)``; flattening a single
raster gives row-major order by y then x, which is also the node order of a
:class:`QuadratureScheme` built on a full grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage


class GeometryError(ValueError):
    """Invalid window, grid or point configuration."""


class ZeroVarianceError(GeometryError):
    """A raster is constant and cannot be standardized."""


class EmptyQuadratureError(GeometryError):
    """No grid cell intersects the window."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular observation window."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(np.isfinite(vals)):
            raise GeometryError(f"window bounds must be finite, got {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"degenerate window {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, xy) -> np.ndarray:
        """Boolean mask of points inside the closed window."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.x_min)
            & (xy[:, 0] <= self.x_max)
            & (xy[:, 1] >= self.y_min)
            & (xy[:, 1] <= self.y_max)
        )

    def dilate(self, margin: float) -> "Window":
        if margin < 0:
            raise GeometryError("dilation margin must be non-negative")
        return Window(
            self.x_min - margin, self.x_max + margin, self.y_min - margin, self.y_max + margin
        )


def erode(window: Window, margin: float) -> Window:
    """Shrink ``window`` by ``margin`` on all four sides."""
    if margin < 0:
        raise GeometryError("erosion margin must be non-negative")
    if 2 * margin >= min(window.width, window.height):
        raise GeometryError(
            f"erosion margin {margin} too large for window {window.width} x {window.height}"
        )
    return Window(
        window.x_min + margin,
        window.x_max - margin,
        window.y_min + margin,
        window.y_max - margin,
    )


@dataclass(frozen=True)
class CovariateField:
    """Stack of ``p`` rasters on a regular grid of ``n_x * n_y`` cells.

    Parameters
    ----------
    values : ndarray, shape (p, n_y, n_x)
        Covariate value at each cell center.
    dx, dy : float
        Cell sizes.
    x0, y0 : float
        Lower-left corner of the grid (cell edges, not centers).
    names : tuple of str
        One label per raster.
    standardized : bool
        Whether each raster has mean 0 and standard deviation 1.
    """

    values: np.ndarray
    dx: float
    dy: float
    x0: float = 0.0
    y0: float = 0.0
    names: tuple = ()
    standardized: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.ndim != 3 or vals.size == 0:
            raise GeometryError("values must have shape (p, n_y, n_x) with p, n_y, n_x >= 1")
        if not np.all(np.isfinite(vals)):
            raise GeometryError("covariate rasters contain non-finite values")
        if not (self.dx > 0 and self.dy > 0):
            raise GeometryError("cell sizes must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        names = tuple(self.names) if self.names else tuple(f"z{i + 1}" for i in range(vals.shape[0]))
        if len(names) != vals.shape[0]:
            raise GeometryError(f"{len(names)} names for {vals.shape[0]} rasters")
        object.__setattr__(self, "names", names)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n_x(self) -> int:
        return self.values.shape[2]

    @property
    def n_y(self) -> int:
        return self.values.shape[1]

    @property
    def extent(self) -> Window:
        return Window(self.x0, self.x0 + self.n_x * self.dx, self.y0, self.y0 + self.n_y * self.dy)

    def cell_centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``(n_y * n_x, 2)`` in raster order."""
        xs = self.x0 + (np.arange(self.n_x) + 0.5) * self.dx
        ys = self.y0 + (np.arange(self.n_y) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_index(self, xy) -> np.ndarray:
        """Flat index of the cell containing each point (nearest cell center).

        Points on the upper grid edge are assigned to the last cell.
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if len(xy) and not np.all(self.extent.contains(xy)):
            raise GeometryError("point outside the covariate grid extent")
        ix = np.clip(np.floor((xy[:, 0] - self.x0) / self.dx).astype(int), 0, self.n_x - 1)
        iy = np.clip(np.floor((xy[:, 1] - self.y0) / self.dy).astype(int), 0, self.n_y - 1)
        return iy * self.n_x + ix

    def flat(self) -> np.ndarray:
        """Rasters as a ``(n_cells, p)`` design block."""
        return self.values.reshape(self.p, -1).T

    def at(self, xy) -> np.ndarray:
        """Covariate rows ``z(u)`` for each point, shape ``(n, p)``."""
        return self.flat()[self.cell_index(xy)]

    def select(self, columns: Sequence[int]) -> "CovariateField":
        cols = list(columns)
        return CovariateField(
            self.values[cols], self.dx, self.dy, self.x0, self.y0,
            tuple(self.names[i] for i in cols), self.standardized,
        )


def standardize(field: CovariateField) -> CovariateField:
    """Center and scale every raster to mean 0, sd 1 (divisor ``n``)."""
    flat = field.values.reshape(field.p, -1)
    mean = flat.mean(axis=1, keepdims=True)
    sd = flat.std(axis=1, keepdims=True)
    bad = [field.names[i] for i in np.flatnonzero(sd[:, 0] <= 1e-12 * (1 + np.abs(mean[:, 0])))]
    if bad:
        raise ZeroVarianceError(f"constant raster(s) {bad} have zero variance")
    out = ((flat - mean) / sd).reshape(field.values.shape)
    return CovariateField(out, field.dx, field.dy, field.x0, field.y0, field.names, True)


@dataclass(frozen=True)
class QuadratureScheme:
    """Midpoint quadrature over a window.

    Each node is a grid cell intersecting the window, placed at the midpoint
    of the clipped cell, with weight equal to the clipped area. ``cells``
    maps nodes back to flat raster indices.
    """

    nodes: np.ndarray
    weights: np.ndarray
    covariates: np.ndarray
    cells: np.ndarray
    window: Window
    grid_shape: tuple = field(default=(0, 0))
    spacing: tuple = field(default=(1.0, 1.0))

    @property
    def n_nodes(self) -> int:
        return len(self.weights)


def make_quadrature(field: CovariateField, window: Window) -> QuadratureScheme:
    """Build the midpoint quadrature of ``window`` on the cells of ``field``."""
    ext = field.extent
    tol = 1e-9 * max(ext.width, ext.height)
    if (
        window.x_min >= ext.x_max or window.x_max <= ext.x_min
        or window.y_min >= ext.y_max or window.y_max <= ext.y_min
    ):
        raise EmptyQuadratureError(f"no grid cell intersects window {window}")
    if (
        window.x_min < ext.x_min - tol
        or window.x_max > ext.x_max + tol
        or window.y_min < ext.y_min - tol
        or window.y_max > ext.y_max + tol
    ):
        raise GeometryError(f"grid extent {ext} does not cover window {window}")

    xe = field.x0 + np.arange(field.n_x + 1) * field.dx
    ye = field.y0 + np.arange(field.n_y + 1) * field.dy
    xlo = np.maximum(xe[:-1], window.x_min)
    xhi = np.minimum(xe[1:], window.x_max)
    ylo = np.maximum(ye[:-1], window.y_min)
    yhi = np.minimum(ye[1:], window.y_max)
    wx = xhi - xlo
    wy = yhi - ylo
    keep_x = np.flatnonzero(wx > 1e-12 * field.dx)
    keep_y = np.flatnonzero(wy > 1e-12 * field.dy)
    if len(keep_x) == 0 or len(keep_y) == 0:
        raise EmptyQuadratureError(f"no grid cell intersects window {window}")

    gx, gy = np.meshgrid(keep_x, keep_y)
    ix, iy = gx.ravel(), gy.ravel()
    cells = iy * field.n_x + ix
    nodes = np.column_stack([(xlo[ix] + xhi[ix]) / 2, (ylo[iy] + yhi[iy]) / 2])
    weights = wx[ix] * wy[iy]
    return QuadratureScheme(
        nodes=nodes,
        weights=weights,
        covariates=field.flat()[cells],
        cells=cells,
        window=window,
        grid_shape=(len(keep_y), len(keep_x)),
        spacing=(field.dx, field.dy),
    )


def synth_covariates(
    seed: int,
    p: int,
    grid: tuple[int, int] = (201, 101),
    smoothness: float = 20.0,
    window: Window | None = None,
) -> CovariateField:
    """Smooth standardized random rasters for benchmarks.

    Gaussian-filtered white noise with kernel standard deviation
    ``smoothness`` (in window length units), then standardized.
    ``grid`` is ``(n_x, n_y)``.
    """
    if p < 1:
        raise GeometryError("p must be >= 1")
    n_x, n_y = grid
    if n_x < 1 or n_y < 1:
        raise GeometryError("grid dimensions must be positive")
    if smoothness < 0:
        raise GeometryError("smoothness must be non-negative")
    window = window or Window(0.0, 250.0, 0.0, 125.0)
    dx, dy = window.width / n_x, window.height / n_y
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    rasters = np.empty((p, n_y, n_x))
    for i in range(p):
        noise = rng.standard_normal((n_y, n_x))
        rasters[i] = ndimage.gaussian_filter(noise, (smoothness / dy, smoothness / dx), mode="reflect")
    raw = CovariateField(rasters, dx, dy, window.x_min, window.y_min)
    return standardize(raw)


@dataclass(frozen=True)
class PointPattern:
    """Finite set of planar points inside ``window``."""

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point coordinates must be finite")
        if len(pts) and not np.all(self.window.contains(pts)):
            raise GeometryError("point pattern has points outside its window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask) -> "PointPattern":
        return PointPattern(self.points[np.asarray(mask)], self.window)

    def restrict(self, window: Window) -> "PointPattern":
        """Points falling inside ``window``, carried over to it."""
        return PointPattern(self.points[window.contains(self.points)], window)


# --- CSV I/O -------------------------------------------------------------

def read_covariates_csv(path) -> CovariateField:
    """Read a wide ``x,y,name1,...`` CSV of cell centers (y-major rows)."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row])
    if header[:2] != ["x", "y"] or len(header) < 3:
        raise GeometryError(f"{path}: expected header x,y,name1,...; got {header}")
    xs = np.unique(rows[:, 0])
    ys = np.unique(rows[:, 1])
    n_x, n_y = len(xs), len(ys)
    if n_x * n_y != len(rows):
        raise GeometryError(f"{path}: {len(rows)} rows do not form a {n_x}x{n_y} grid")
    dx = (xs[-1] - xs[0]) / (n_x - 1) if n_x > 1 else 1.0
    dy = (ys[-1] - ys[0]) / (n_y - 1) if n_y > 1 else 1.0
    ix = np.rint((rows[:, 0] - xs[0]) / dx).astype(int)
    iy = np.rint((rows[:, 1] - ys[0]) / dy).astype(int)
    vals = np.empty((len(header) - 2, n_y, n_x))
    vals[:, iy, ix] = rows[:, 2:].T
    return CovariateField(vals, dx, dy, xs[0] - dx / 2, ys[0] - dy / 2, tuple(header[2:]))


def write_covariates_csv(field: CovariateField, path) -> None:
    centers = field.cell_centers()
    data = np.column_stack([centers, field.flat()])
    header = ",".join(["x", "y", *field.names])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")


def read_pattern_csv(path, window: Window) -> PointPattern:
    """Read an ``x,y`` CSV with header."""
    pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PointPattern(pts.reshape(-1, 2), window)


def write_pattern_csv(pattern: PointPattern, path) -> None:
    np.savetxt(path, pattern.points, delimiter=",", header="x,y", comments="", fmt="%.12g")
