"""The two i.i.d. toy examples with analytic oracle distributions.

Example 1: two latent groups with different spreads. Group membership drives
the response but is not observed, so the conditional density given the two
measured features is a two-component mixture, bimodal where the branches
separate (first feature positive).

Example 2: a single feature, with the data drawn from a sinh-arcsinh family
that is either skewed or kurtotic in x while the initial model is the fixed
Gaussian N(x, 2). At x = 0 both settings reduce to the initial model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .. import rng as rngmod
from ..calibrate import CalibrationSet
from ..grid import YGrid, default_grid
from ..models import GaussianInitialModel
from .sinharcsinh import (
    SinhArcsinhParams,
    sinh_arcsinh_cdf,
    sinh_arcsinh_pdf,
    sinh_arcsinh_quantile,
    sinh_arcsinh_sample,
)

__all__ = [
    "TwoGroupConfig",
    "GeneratedData",
    "Example1Oracle",
    "Example2Oracle",
    "sample_example1",
    "sample_example2",
]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class GeneratedData:
    """A drawn calibration set plus the exact law it came from."""

    cal: CalibrationSet
    oracle: object
    grid: YGrid
    initial: object | None = None


def _bisect_quantile(cdf_fn, p: float, lo: float, hi: float) -> float:
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if cdf_fn(mid) >= p:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# Example 1: unobserved two-group mixture
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TwoGroupConfig:
    """Law of the two-group data; the defaults reproduce the documented DGP.

    Group means sit at +-(branch_gap / 2) * x1 once x1 > 0 and at zero
    otherwise; the minority group is rarer and noisier.
    """

    minority_fraction: float = 0.2
    majority_scale: float = 1.0
    minority_scale: float = 3.0
    branch_gap: float = 2.0
    x_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        if not 0.0 < self.minority_fraction < 1.0:
            raise ValueError("minority_fraction must be in (0, 1)")
        if not self.minority_scale > self.majority_scale:
            raise ValueError("minority group must have the larger spread")


class Example1Oracle:
    """Analytic two-component mixture conditional on the measured features."""

    def __init__(self, cfg: TwoGroupConfig):
        self.cfg = cfg

    def _components(self, x):
        x1 = float(np.asarray(x, dtype=float).ravel()[0])
        offset = 0.5 * self.cfg.branch_gap * x1 if x1 > 0 else 0.0
        means = np.array([offset, -offset])
        scales = np.array([self.cfg.majority_scale, self.cfg.minority_scale])
        weights = np.array([1.0 - self.cfg.minority_fraction, self.cfg.minority_fraction])
        return means, scales, weights

    def cdf(self, y, x):
        means, scales, weights = self._components(x)
        y = np.asarray(y, dtype=float)
        z = (y[..., None] - means) / scales
        return ndtr(z) @ weights

    def pdf(self, y, x):
        means, scales, weights = self._components(x)
        y = np.asarray(y, dtype=float)
        z = (y[..., None] - means) / scales
        return (_INV_SQRT_2PI * np.exp(-0.5 * z * z) / scales) @ weights

    def quantile(self, p, x):
        means, scales, weights = self._components(x)
        lo = float(np.min(means - 12.0 * scales))
        hi = float(np.max(means + 12.0 * scales))
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.array([_bisect_quantile(lambda y: self.cdf(y, x), pi, lo, hi) for pi in p_arr])
        return out[0] if np.isscalar(p) or np.asarray(p).ndim == 0 else out

    def sample(self, x, rng: np.random.Generator, size: int):
        means, scales, weights = self._components(x)
        comp = rng.random(size) < weights[1]
        draws = rng.standard_normal(size)
        return np.where(comp, means[1] + scales[1] * draws, means[0] + scales[0] * draws)


def sample_example1(cfg: TwoGroupConfig, n: int, seed: int,
                    n_grid: int = 201) -> GeneratedData:
    """Draw the two-group data; group membership is used but not recorded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rngmod.derived_rng(seed, "example1")
    lo, hi = cfg.x_range
    x12 = rng.uniform(lo, hi, size=(n, 2))
    minority = rng.random(n) < cfg.minority_fraction
    x1 = x12[:, 0]
    offset = np.where(x1 > 0, 0.5 * cfg.branch_gap * x1, 0.0)
    sign = np.where(minority, -1.0, 1.0)
    scale = np.where(minority, cfg.minority_scale, cfg.majority_scale)
    ys = sign * offset + scale * rng.standard_normal(n)
    grid = default_grid(ys, n_points=n_grid)
    cal = CalibrationSet(x12, ys)
    return GeneratedData(cal=cal, oracle=Example1Oracle(cfg), grid=grid)


# ----------------------------------------------------------------------
# Example 2: misspecified Gaussian against a sinh-arcsinh target
# ----------------------------------------------------------------------

class Example2Oracle:
    """Sinh-arcsinh law whose parameters drift with the single feature."""

    def __init__(self, setting: str):
        if setting not in ("skewed", "kurtotic"):
            raise ValueError(f"unknown setting {setting!r}")
        self.setting = setting

    def params_at(self, x) -> SinhArcsinhParams:
        x1 = float(np.asarray(x, dtype=float).ravel()[0])
        if self.setting == "skewed":
            return SinhArcsinhParams(mu=x1, sigma=2.0 - abs(x1), skew=x1, tail=1.0)
        return SinhArcsinhParams(mu=x1, sigma=2.0, skew=0.0, tail=1.0 - x1 / 4.0)

    def cdf(self, y, x):
        return sinh_arcsinh_cdf(self.params_at(x), y)

    def pdf(self, y, x):
        return sinh_arcsinh_pdf(self.params_at(x), y)

    def quantile(self, p, x):
        return sinh_arcsinh_quantile(self.params_at(x), p)

    def sample(self, x, rng: np.random.Generator, size: int):
        return sinh_arcsinh_sample(self.params_at(x), rng, size)


def sample_example2(setting: str, n: int, seed: int,
                    n_grid: int = 201) -> GeneratedData:
    """Draw (x, y) with x ~ U(-1, 1) and y from the chosen sinh-arcsinh law.

    The returned ``initial`` model is the misspecified Gaussian N(x, 2) on the
    response grid; it matches the oracle exactly at x = 0 in both settings.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    oracle = Example2Oracle(setting)
    rng = rngmod.derived_rng(seed, "example2", setting)
    xs = rng.uniform(-1.0, 1.0, size=(n, 1))
    w = rng.standard_normal(n)
    if setting == "skewed":
        mu = xs[:, 0]
        sigma = 2.0 - np.abs(xs[:, 0])
        ys = mu + sigma * np.sinh(np.arcsinh(w) + xs[:, 0])
    else:
        tail = 1.0 - xs[:, 0] / 4.0
        ys = xs[:, 0] + 2.0 * np.sinh(np.arcsinh(w) / tail)
    grid = default_grid(ys, n_points=n_grid)
    initial = GaussianInitialModel(grid, mean_fn=lambda x: float(np.ravel(x)[0]), sd_fn=2.0)
    return GeneratedData(cal=CalibrationSet(xs, ys), oracle=oracle, grid=grid, initial=initial)
