"""Conformal baselines: split residual intervals and distributional scores.

Both wrap the standard split-conformal recipe: compute nonconformity scores on
held-out calibration data and invert the ceil((n + 1) (1 - alpha))-th smallest
score into an interval. The residual variant yields the same width everywhere;
the distributional variant converts a quantile of centered PIT scores back
through the initial model's CDF, so its width tracks the initial model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .calibrate import CalibrationSet, PredictionSet, compute_pit_values
from .errors import InsufficientCalibration
from .grid import invert_cdf
from .models import model_cdf

__all__ = [
    "ConformalCalibration",
    "KnnMeanRegressor",
    "RegSplitModel",
    "DcpModel",
    "fit_knn_mean",
    "reg_split",
    "dcp",
]


@dataclass(frozen=True)
class ConformalCalibration:
    """Sorted nonconformity scores and the conformal quantile index."""

    scores: np.ndarray
    alpha: float
    quantile_index: int

    @classmethod
    def from_scores(cls, scores, alpha: float) -> "ConformalCalibration":
        scores = np.sort(np.asarray(scores, dtype=float))
        n = scores.shape[0]
        idx = math.ceil((n + 1) * (1.0 - alpha))
        if idx > n:
            raise InsufficientCalibration(
                f"need more than {n} scores for alpha={alpha} (index {idx})"
            )
        return cls(scores, alpha, idx)

    @property
    def threshold(self) -> float:
        return float(self.scores[self.quantile_index - 1])


class KnnMeanRegressor:
    """Nearest-neighbor mean in standardized feature space."""

    def __init__(self, train: CalibrationSet, k: int = 50):
        self.k = min(k, len(train))
        self.mean = train.xs.mean(axis=0)
        self.scale = np.where(train.xs.std(axis=0) > 0, train.xs.std(axis=0), 1.0)
        self._tree = cKDTree((train.xs - self.mean) / self.scale)
        self._ys = train.ys

    def __call__(self, x) -> float:
        q = (np.asarray(x, dtype=float).ravel() - self.mean) / self.scale
        _, idx = self._tree.query(q, k=self.k)
        return float(np.mean(self._ys[np.atleast_1d(idx)]))


def fit_knn_mean(train: CalibrationSet, k: int = 50) -> KnnMeanRegressor:
    return KnnMeanRegressor(train, k=k)


class RegSplitModel:
    """Point fit plus one global residual quantile."""

    def __init__(self, fit_mean, train: CalibrationSet, cal: CalibrationSet, alpha: float):
        self.mu = fit_mean(train)
        residuals = np.array([abs(cal.ys[i] - self.mu(cal.xs[i])) for i in range(len(cal))])
        self.calibration = ConformalCalibration.from_scores(residuals, alpha)
        self.alpha = alpha

    def predict_set(self, x) -> PredictionSet:
        center = self.mu(x)
        q = self.calibration.threshold
        return PredictionSet(
            ((center - q, center + q),), nominal_level=1.0 - self.alpha, kind="interval"
        )


def reg_split(fit_mean, train: CalibrationSet, cal: CalibrationSet,
              alpha: float, x) -> PredictionSet:
    """Split-conformal residual interval at one feature point."""
    return RegSplitModel(fit_mean, train, cal, alpha).predict_set(x)


class DcpModel:
    """Distributional conformal intervals from centered PIT scores.

    Scores are |PIT(y; x) - 1/2| under the initial model; the conformal
    threshold q maps to the probability band [1/2 - q, 1/2 + q], clamped to
    [0, 1], which the initial CDF inverts at each x.
    """

    def __init__(self, initial, cal: CalibrationSet, alpha: float, pit_values=None):
        if pit_values is None:
            pit_values = compute_pit_values(initial, cal)
        scores = np.abs(np.asarray(pit_values, dtype=float) - 0.5)
        self.calibration = ConformalCalibration.from_scores(scores, alpha)
        self.initial = initial
        self.alpha = alpha

    def predict_set(self, x) -> PredictionSet:
        q = self.calibration.threshold
        p_lo = max(0.0, 0.5 - q)
        p_hi = min(1.0, 0.5 + q)
        cdf = model_cdf(self.initial, x)
        lo = invert_cdf(cdf, p_lo)
        hi = invert_cdf(cdf, p_hi)
        return PredictionSet(((lo, hi),), nominal_level=1.0 - self.alpha, kind="interval")


def dcp(initial, cal: CalibrationSet, alpha: float, x) -> PredictionSet:
    """Distributional conformal interval at one feature point."""
    return DcpModel(initial, cal, alpha).predict_set(x)
