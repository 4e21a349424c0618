"""Concrete initial conditional models backed by the response grid.

These are deliberately simple: a fixed-width Gaussian around a point
prediction, a flat density over the grid range, a feature-independent
marginal histogram, an arbitrary callable, and a forward-sampling wrapper for
models without a closed-form CDF. Any of them can seed the recalibration
pipeline, which morphs the initial shape toward the calibration data.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import rng as rngmod
from .grid import (
    GridCdf,
    GridDensity,
    YGrid,
    cdf_from_density,
    renormalize_density,
    widen_density,
)

__all__ = [
    "GaussianInitialModel",
    "UniformInitialModel",
    "MarginalHistogramModel",
    "CallableDensityModel",
    "SampleBasedModel",
    "model_cdf",
]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def model_cdf(model, x) -> GridCdf:
    """CDF of an initial model at ``x``, via ``cdf_at`` when available."""
    cdf_at = getattr(model, "cdf_at", None)
    if cdf_at is not None:
        return cdf_at(np.asarray(x, dtype=float))
    return cdf_from_density(model.density_at(np.asarray(x, dtype=float)))


class GaussianInitialModel:
    """Gaussian density N(mean_fn(x), sd_fn(x)^2) truncated to the grid."""

    sample_based = False

    def __init__(self, grid: YGrid, mean_fn: Callable, sd_fn: Callable | float):
        self.grid = grid
        self.mean_fn = mean_fn
        self.sd_fn = sd_fn if callable(sd_fn) else (lambda x, s=float(sd_fn): s)

    def density_at(self, x) -> GridDensity:
        x = np.asarray(x, dtype=float)
        mu = float(self.mean_fn(x))
        sd = float(self.sd_fn(x))
        z = (self.grid.points - mu) / sd
        vals = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / sd
        return renormalize_density(GridDensity(self.grid, vals))

    def density_matrix(self, xs) -> np.ndarray:
        """Unnormalized density rows for many feature points (batch PIT path)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        mu = np.array([float(self.mean_fn(x)) for x in xs])
        sd = np.array([float(self.sd_fn(x)) for x in xs])
        z = (self.grid.points[None, :] - mu[:, None]) / sd[:, None]
        return _INV_SQRT_2PI * np.exp(-0.5 * z * z) / sd[:, None]


class UniformInitialModel:
    """Flat density over the grid range; the maximally agnostic start."""

    sample_based = False

    def __init__(self, grid: YGrid):
        self.grid = grid
        span = grid.hi - grid.lo
        self._density = GridDensity(grid, np.full(len(grid), 1.0 / span))

    def density_at(self, x) -> GridDensity:
        return self._density

    def density_matrix(self, xs) -> np.ndarray:
        n = np.atleast_2d(np.asarray(xs, dtype=float)).shape[0]
        return np.tile(self._density.values, (n, 1))


class MarginalHistogramModel:
    """Feature-independent estimate of the marginal response distribution.

    A histogram on the grid cells, lightly widened so the density is smooth
    enough to invert. Ignores ``x`` entirely, which is exactly the kind of
    initial model whose local miscalibration the diagnostics should expose.
    """

    sample_based = False

    def __init__(self, grid: YGrid, ys, smooth_steps: float = 2.0):
        self.grid = grid
        ys = np.asarray(ys, dtype=float)
        pts = grid.points
        edges = np.concatenate([[pts[0]], 0.5 * (pts[1:] + pts[:-1]), [pts[-1]]])
        counts, _ = np.histogram(np.clip(ys, pts[0], pts[-1]), bins=edges)
        widths = np.diff(edges)
        raw = GridDensity(grid, counts / np.maximum(widths, 1e-300) / max(len(ys), 1))
        step = (grid.hi - grid.lo) / (len(grid) - 1)
        self._density = widen_density(raw, smooth_steps * step)

    def density_at(self, x) -> GridDensity:
        return self._density

    def density_matrix(self, xs) -> np.ndarray:
        n = np.atleast_2d(np.asarray(xs, dtype=float)).shape[0]
        return np.tile(self._density.values, (n, 1))


class CallableDensityModel:
    """Wrap a function x -> density values on the fixed grid."""

    sample_based = False

    def __init__(self, grid: YGrid, fn: Callable):
        self.grid = grid
        self.fn = fn

    def density_at(self, x) -> GridDensity:
        vals = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)
        return renormalize_density(GridDensity(self.grid, vals))


class SampleBasedModel:
    """Initial model known only through forward simulation.

    ``sampler(x, rng, size)`` must return draws of the response. Draws are
    deterministic per ``x`` (seed derived from the model seed and the feature
    bytes), so repeated PIT evaluations agree.
    """

    sample_based = True

    def __init__(self, grid: YGrid, sampler: Callable, n_draws: int = 2000, seed: int = 0):
        self.grid = grid
        self.sampler = sampler
        self.n_draws = int(n_draws)
        self.seed = int(seed)

    def _rng_for(self, x: np.ndarray) -> np.random.Generator:
        digest = np.asarray(x, dtype=float).tobytes().hex()
        return rngmod.derived_rng(self.seed, "sample-model", digest)

    def draws_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.sampler(x, self._rng_for(x), self.n_draws), dtype=float)

    def density_at(self, x) -> GridDensity:
        # histogram of the draws on the grid cells; adequate for reshaping,
        # while PIT values come from the draws directly
        draws = self.draws_at(x)
        pts = self.grid.points
        edges = np.concatenate([[pts[0]], 0.5 * (pts[1:] + pts[:-1]), [pts[-1]]])
        counts, _ = np.histogram(np.clip(draws, pts[0], pts[-1]), bins=edges)
        widths = np.diff(edges)
        raw = GridDensity(self.grid, counts / np.maximum(widths, 1e-300) / draws.size)
        step = (self.grid.hi - self.grid.lo) / (len(self.grid) - 1)
        return widen_density(raw, 2.0 * step)

    def cdf_at(self, x) -> GridCdf:
        draws = np.sort(self.draws_at(x))
        vals = np.searchsorted(draws, self.grid.points, side="right") / draws.size
        vals[-1] = 1.0
        return GridCdf(self.grid, vals)
