"""Grid-based one-dimensional densities and CDFs.

Everything downstream speaks in terms of a conditional density or CDF
evaluated on a fixed response grid. This module owns that representation:
integration (density -> CDF), inversion (quantiles), point evaluation of the
CDF (used as the probability integral transform), renormalization of raw
density values, Gaussian widening, and shape-preserving monotone cubic
interpolation.

Conventions
-----------
* Integration rule is the trapezoid rule throughout, so the CDF of a
  piecewise-linear density is exact.
* CDF evaluation off the grid clamps to {0, 1}: these values are
  probabilities, not extrapolations.
* Quantile lookups on flat CDF segments return the leftmost response value.

All containers are immutable after construction and safe to share across
threads for read-only evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import (
    DegenerateDensity,
    EmptySample,
    InvalidBandwidth,
    InvalidDensity,
    InvalidGrid,
    NonMonotoneInput,
)

__all__ = [
    "YGrid",
    "GridDensity",
    "GridCdf",
    "MonotoneSpline",
    "InitialModel",
    "fit_monotone_spline",
    "cdf_from_density",
    "invert_cdf",
    "pit",
    "pit_from_samples",
    "renormalize_density",
    "widen_density",
    "default_grid",
    "trapezoid_weights",
    "write_grid_csv",
    "read_grid_csv",
]

_SNAP_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class YGrid:
    """Strictly increasing grid of response values (length >= 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 3:
            raise InvalidGrid(f"grid must be 1-D with >= 3 points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidGrid("grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise InvalidGrid("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Quadrature weights w such that sum(w * f) = trapezoid integral of f."""
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2.0
    w[1:] += h / 2.0
    return w


@dataclass(frozen=True)
class GridDensity:
    """Density values on a grid.

    The container itself only checks shapes and finiteness; raw spline
    derivatives may carry small negative values, which
    :func:`renormalize_density` clips and rescales. Consumers that require a
    proper density (e.g. :func:`cdf_from_density`) enforce nonnegativity.
    """

    grid: YGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.points.shape:
            raise InvalidDensity("density values must match grid shape")
        if not np.all(np.isfinite(vals)):
            raise InvalidDensity("density values must be finite")
        object.__setattr__(self, "values", vals)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid.points))


@dataclass(frozen=True)
class GridCdf:
    """Nondecreasing CDF values in [0, 1] on a grid."""

    grid: YGrid
    values: np.ndarray
    _spline_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.points.shape:
            raise ValueError("cdf values must match grid shape")
        if not np.all(np.isfinite(vals)):
            raise ValueError("cdf values must be finite")
        if np.any(np.diff(vals) < -_SNAP_TOL):
            raise ValueError("cdf values decrease by more than the snap tolerance")
        vals = np.clip(np.maximum.accumulate(vals), 0.0, 1.0)
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def spline(self) -> "MonotoneSpline":
        """Monotone cubic interpolant of the CDF (built lazily, cached)."""
        if not self._spline_cache:
            self._spline_cache.append(fit_monotone_spline(self.grid.points, self.values))
        return self._spline_cache[0]


@runtime_checkable
class InitialModel(Protocol):
    """Initial conditional model: a density on a fixed grid per feature point.

    ``sample_based`` models do not expose a closed-form CDF and approximate
    PIT values from forward draws (``draws_at``). Grid-backed models must be
    deterministic per ``x``.
    """

    grid: YGrid
    sample_based: bool

    def density_at(self, x: np.ndarray) -> GridDensity: ...


# ----------------------------------------------------------------------
# Monotone cubic Hermite interpolation (Fritsch-Carlson limited slopes)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneSpline:
    """Shape-preserving cubic Hermite interpolant of nondecreasing data.

    Evaluation reproduces the knots exactly, never overshoots the adjacent
    knot ordinates, and is nondecreasing everywhere. Outside the knot range
    the spline continues as a constant, which keeps CDF and quantile uses
    well-defined.
    """

    knots_x: np.ndarray
    knots_y: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "knots_x", _frozen(self.knots_x))
        object.__setattr__(self, "knots_y", _frozen(self.knots_y))
        object.__setattr__(self, "slopes", _frozen(self.slopes))

    def _locate(self, q: np.ndarray):
        xs = self.knots_x
        idx = np.searchsorted(xs, q, side="right") - 1
        idx = np.clip(idx, 0, xs.size - 2)
        h = xs[idx + 1] - xs[idx]
        t = (q - xs[idx]) / h
        return idx, h, t

    def __call__(self, q) -> np.ndarray:
        q_arr = np.asarray(q, dtype=float)
        scalar = q_arr.ndim == 0
        q_arr = np.atleast_1d(q_arr)
        idx, h, t = self._locate(q_arr)
        t = np.clip(t, 0.0, 1.0)
        ys, m = self.knots_y, self.slopes
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        out = (
            ys[idx] * h00
            + h * m[idx] * h10
            + ys[idx + 1] * h01
            + h * m[idx + 1] * h11
        )
        return float(out[0]) if scalar else out

    def derivative(self, q) -> np.ndarray:
        """Analytic first derivative (zero outside the knot range)."""
        q_arr = np.asarray(q, dtype=float)
        scalar = q_arr.ndim == 0
        q_arr = np.atleast_1d(q_arr)
        idx, h, t = self._locate(q_arr)
        inside = (t >= 0.0) & (t <= 1.0)
        t = np.clip(t, 0.0, 1.0)
        ys, m = self.knots_y, self.slopes
        t2 = t * t
        dh00 = 6 * t2 - 6 * t
        dh10 = 3 * t2 - 4 * t + 1
        dh01 = -6 * t2 + 6 * t
        dh11 = 3 * t2 - 2 * t
        out = (
            ys[idx] * dh00 / h
            + m[idx] * dh10
            + ys[idx + 1] * dh01 / h
            + m[idx + 1] * dh11
        )
        out = np.where(inside, out, 0.0)
        return float(out[0]) if scalar else out

    @property
    def segment_coefficients(self) -> np.ndarray:
        """Per-interval cubic coefficients c[k] of y = sum_k c[k] * s**k.

        ``s`` is the offset from the left knot of the interval.
        """
        xs, ys, m = self.knots_x, self.knots_y, self.slopes
        h = np.diff(xs)
        d = np.diff(ys) / h
        c0 = ys[:-1]
        c1 = m[:-1]
        c2 = (3 * d - 2 * m[:-1] - m[1:]) / h
        c3 = (m[:-1] + m[1:] - 2 * d) / h**2
        return np.column_stack([c0, c1, c2, c3])

    def solve(self, target: float) -> float:
        """Leftmost x with spline(x) >= target (bisection per segment).

        Targets below the first ordinate return the first knot; targets above
        the last ordinate return the last knot.
        """
        xs, ys = self.knots_x, self.knots_y
        if target <= ys[0]:
            return float(xs[0])
        if target > ys[-1]:
            return float(xs[-1])
        j = int(np.searchsorted(ys, target, side="left"))
        lo, hi = float(xs[j - 1]), float(xs[j])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self(mid) >= target:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-14 * max(1.0, abs(hi)):
                break
        return hi


def fit_monotone_spline(xs, ys) -> MonotoneSpline:
    """Fit a monotone cubic Hermite spline to nondecreasing data.

    Knot slopes start from secant averages and are limited to the
    Fritsch-Carlson monotonicity circle (alpha^2 + beta^2 <= 9), with zero
    slope forced at every knot adjacent to a flat secant. Ordinates that
    decrease by at most 1e-9 are snapped up; larger decreases raise
    :class:`NonMonotoneInput`.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
        raise NonMonotoneInput("need 1-D xs/ys of equal length >= 2")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise NonMonotoneInput("spline knots must be finite")
    if np.any(np.diff(xs) <= 0):
        raise InvalidGrid("spline abscissae must be strictly increasing")
    if np.any(np.diff(ys) < -_SNAP_TOL):
        raise NonMonotoneInput("ordinates decrease by more than 1e-9")
    ys = np.maximum.accumulate(ys)

    n = xs.size
    h = np.diff(xs)
    d = np.diff(ys) / h

    m = np.empty(n)
    m[0] = d[0]
    m[-1] = d[-1]
    if n > 2:
        m[1:-1] = 0.5 * (d[:-1] + d[1:])

    # flat secants force flat knots on both ends of the segment
    flat = d == 0.0
    m[:-1][flat] = 0.0
    m[1:][flat] = 0.0

    # scale each knot slope into the monotonicity circle (alpha^2 + beta^2 <= 9)
    # of both adjacent segments; shrinking only ever preserves the constraint
    safe_d = np.where(flat, 1.0, d)
    alpha = np.where(flat, 0.0, m[:-1] / safe_d)
    beta = np.where(flat, 0.0, m[1:] / safe_d)
    r2 = alpha * alpha + beta * beta
    tau = np.where(r2 > 9.0, 3.0 / np.sqrt(np.maximum(r2, 1e-300)), 1.0)
    scale = np.minimum(np.concatenate([[1.0], tau]), np.concatenate([tau, [1.0]]))
    m *= scale

    return MonotoneSpline(xs, ys, m)


# ----------------------------------------------------------------------
# Density / CDF operations
# ----------------------------------------------------------------------

def cdf_from_density(d: GridDensity) -> GridCdf:
    """Cumulative trapezoid integral of a density, as a :class:`GridCdf`.

    The density is renormalized to unit mass first, the running integral is
    clamped to [0, 1], and the final value is forced to exactly 1.
    """
    if np.any(d.values < 0):
        raise InvalidDensity("density has negative values; renormalize first")
    pts = d.grid.points
    vals = d.values
    seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise DegenerateDensity("density integrates to zero")
    cum = np.clip(cum / total, 0.0, 1.0)
    cum[0] = 0.0
    cum[-1] = 1.0
    return GridCdf(d.grid, cum)


def invert_cdf(c: GridCdf, p: float) -> float:
    """Smallest response value whose interpolated CDF reaches ``p``.

    Flat CDF stretches resolve to their leftmost point. ``p`` below the first
    grid value maps to the first grid point, ``p`` above the last value to the
    last grid point.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p}")
    return c.spline.solve(p)


def pit(c: GridCdf, y: float) -> float:
    """Interpolated CDF value at ``y``, clamped to {0, 1} off the grid."""
    if y < c.grid.lo:
        return 0.0
    if y > c.grid.hi:
        return 1.0
    return float(np.clip(c.spline(y), 0.0, 1.0))


def pit_from_samples(draws, y: float) -> float:
    """Fraction of forward draws at or below ``y``."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise EmptySample("need at least one draw to approximate the PIT")
    return float(np.mean(draws <= y))


def renormalize_density(d: GridDensity) -> GridDensity:
    """Clip negative values to zero and rescale to unit trapezoid mass."""
    vals = np.maximum(d.values, 0.0)
    total = np.trapezoid(vals, d.grid.points)
    if total <= 0:
        raise DegenerateDensity("no positive mass left after clipping")
    return GridDensity(d.grid, vals / total)


def widen_density(d: GridDensity, bandwidth: float) -> GridDensity:
    """Convolve with a Gaussian kernel on the grid, reflecting at the edges.

    Mass that the kernel would push off the grid is folded back in by
    mirroring source points about both boundaries, so the result keeps unit
    mass (up to the final renormalization).
    """
    if not bandwidth > 0:
        raise InvalidBandwidth(f"bandwidth must be > 0, got {bandwidth}")
    pts = d.grid.points
    w = trapezoid_weights(pts)
    src = d.values * w

    def kernel(centers):
        z = (pts[:, None] - centers[None, :]) / bandwidth
        return np.exp(-0.5 * z * z)

    k = kernel(pts) + kernel(2 * pts[0] - pts) + kernel(2 * pts[-1] - pts)
    out = k @ src  # normalization constant cancels in renormalize_density
    return renormalize_density(GridDensity(d.grid, out))


def default_grid(values, n_points: int = 201, margin: float = 0.1) -> YGrid:
    """Equispaced grid spanning the data range extended by ``margin`` per side."""
    values = np.asarray(values, dtype=float)
    lo = float(np.min(values))
    hi = float(np.max(values))
    span = hi - lo
    if span <= 0:
        span = max(abs(lo), 1.0)
    return YGrid(np.linspace(lo - margin * span, hi + margin * span, n_points))


# ----------------------------------------------------------------------
# Batched PIT evaluation (same spline construction, many rows at once)
# ----------------------------------------------------------------------

def _batch_fc_slopes(xs: np.ndarray, ys_rows: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson limited slopes for many nondecreasing rows at once."""
    h = np.diff(xs)
    d = np.diff(ys_rows, axis=1) / h
    m = np.empty_like(ys_rows)
    m[:, 0] = d[:, 0]
    m[:, -1] = d[:, -1]
    if ys_rows.shape[1] > 2:
        m[:, 1:-1] = 0.5 * (d[:, :-1] + d[:, 1:])
    flat = d == 0.0
    m[:, :-1] = np.where(flat, 0.0, m[:, :-1])
    m[:, 1:] = np.where(flat, 0.0, m[:, 1:])
    safe_d = np.where(flat, 1.0, d)
    alpha = np.where(flat, 0.0, m[:, :-1] / safe_d)
    beta = np.where(flat, 0.0, m[:, 1:] / safe_d)
    r2 = alpha * alpha + beta * beta
    tau = np.where(r2 > 9.0, 3.0 / np.sqrt(np.maximum(r2, 1e-300)), 1.0)
    ones = np.ones((ys_rows.shape[0], 1))
    scale = np.minimum(np.concatenate([ones, tau], axis=1),
                       np.concatenate([tau, ones], axis=1))
    return m * scale


def cdf_rows_from_density_rows(points: np.ndarray, density_rows: np.ndarray) -> np.ndarray:
    """Row-wise cumulative trapezoid CDFs, normalized and endpoint-snapped."""
    if np.any(density_rows < 0):
        raise InvalidDensity("density rows have negative values")
    seg = 0.5 * (density_rows[:, 1:] + density_rows[:, :-1]) * np.diff(points)
    cum = np.concatenate([np.zeros((density_rows.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
    total = cum[:, -1:]
    if np.any(total <= 0):
        raise DegenerateDensity("a density row integrates to zero")
    cum = np.clip(cum / total, 0.0, 1.0)
    cum[:, 0] = 0.0
    cum[:, -1] = 1.0
    return cum


def pit_matrix(grid: YGrid, density_rows: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """PIT of one response per density row, matching :func:`pit` per row.

    Each row is integrated to a CDF and interpolated with the same monotone
    cubic used by :func:`pit`; queries off the grid clamp to {0, 1}.
    """
    pts = grid.points
    ys = np.asarray(ys, dtype=float)
    cdf_rows = cdf_rows_from_density_rows(pts, np.asarray(density_rows, dtype=float))
    m = _batch_fc_slopes(pts, cdf_rows)
    idx = np.clip(np.searchsorted(pts, ys, side="right") - 1, 0, pts.size - 2)
    rows = np.arange(ys.shape[0])
    h = pts[idx + 1] - pts[idx]
    t = np.clip((ys - pts[idx]) / h, 0.0, 1.0)
    y0 = cdf_rows[rows, idx]
    y1 = cdf_rows[rows, idx + 1]
    m0 = m[rows, idx]
    m1 = m[rows, idx + 1]
    t2 = t * t
    t3 = t2 * t
    out = (
        y0 * (2 * t3 - 3 * t2 + 1)
        + h * m0 * (t3 - 2 * t2 + t)
        + y1 * (-2 * t3 + 3 * t2)
        + h * m1 * (t3 - t2)
    )
    out = np.clip(out, 0.0, 1.0)
    out = np.where(ys < pts[0], 0.0, out)
    out = np.where(ys > pts[-1], 1.0, out)
    return out


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def write_grid_csv(path, grid: YGrid, values: np.ndarray, comment: str | None = None):
    """Write ``y,value`` rows with full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("y,value\n")
        for y, v in zip(grid.points, np.asarray(values, dtype=float)):
            fh.write(f"{float(y)!r},{float(v)!r}\n")


def read_grid_csv(path):
    """Read a ``y,value`` CSV written by :func:`write_grid_csv`."""
    ys, vs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("y,"):
                continue
            a, b = line.split(",")
            ys.append(float(a))
            vs.append(float(b))
    return YGrid(np.array(ys)), np.array(vs)
