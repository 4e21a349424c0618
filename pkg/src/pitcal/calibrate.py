"""Recalibration core: learn the PIT-CDF map and reshape distributions.

The pipeline: compute PIT values of calibration responses under an initial
model, regress the indicator I(PIT <= gamma) on (x, gamma) to estimate the
conditional PIT-CDF r(gamma; x), then push the initial CDF through that map
to obtain a recalibrated distribution, central intervals, and highest-density
sets. Two interchangeable regression backends satisfy the same interface:

* a local empirical estimator (k nearest neighbors, exact in gamma), and
* a partially monotone neural network (see :mod:`pitcal.monotone_net`).
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import rng as rngmod
from .errors import (
    DegenerateRecalibration,
    HpdSearchFailed,
    InsufficientData,
    LengthMismatch,
    ModelEvalError,
    PitcalError,
)
from .grid import (
    GridCdf,
    GridDensity,
    MonotoneSpline,
    fit_monotone_spline,
    pit,
    pit_from_samples,
    renormalize_density,
)
from .models import model_cdf

__all__ = [
    "CalibrationSet",
    "AugmentedCalibrationSet",
    "PitCdfModel",
    "IdentityPitCdf",
    "LocalEmpiricalConfig",
    "LocalEmpiricalModel",
    "RecalibratedDistribution",
    "RecalibratedInitialModel",
    "PredictionSet",
    "compute_pit_values",
    "augment",
    "fit_local_empirical",
    "recalibrate",
    "calpit_interval",
    "calpit_hpd",
    "estimated_ot",
    "save_pit_model",
    "load_pit_model",
]

MODEL_FORMAT_VERSION = 1

# backend tag -> deserializer; the net backend registers itself on import
_MODEL_LOADERS: dict = {}


@dataclass(frozen=True)
class CalibrationSet:
    """Held-out (x, y) pairs used to learn the PIT-CDF regression."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.asarray(self.ys, dtype=float).ravel()
        if xs.shape[0] != ys.shape[0]:
            raise LengthMismatch("xs and ys row counts differ")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("calibration data must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return self.ys.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class AugmentedCalibrationSet:
    """Oversampled regression rows (x_i, gamma_ij, w_ij), j = 1..K per point.

    Stored compactly: features live once in ``base_xs`` and each augmented row
    points back through ``row_index``. ``base_pit`` keeps the PIT value each
    indicator was computed from, which the network trainer reuses for its
    fixed-grid validation loss.
    """

    base_xs: np.ndarray
    base_pit: np.ndarray
    row_index: np.ndarray
    gamma: np.ndarray
    w: np.ndarray
    k_factor: int

    def __len__(self) -> int:
        return self.gamma.shape[0]

    @property
    def xs(self) -> np.ndarray:
        """Materialized feature matrix, one row per augmented row."""
        return self.base_xs[self.row_index]

    @property
    def n_base(self) -> int:
        return self.base_xs.shape[0]


def compute_pit_values(model, cal: CalibrationSet) -> np.ndarray:
    """PIT(y_i; x_i) under the initial model, one value per calibration row.

    Sample-based models approximate the PIT as the fraction of forward draws
    at or below the observed response.
    """
    sample_based = bool(getattr(model, "sample_based", False))
    density_matrix = getattr(model, "density_matrix", None)
    if not sample_based and density_matrix is not None:
        from .grid import pit_matrix

        try:
            return pit_matrix(model.grid, density_matrix(cal.xs), cal.ys)
        except PitcalError as exc:
            raise ModelEvalError(-1, str(exc)) from exc
    out = np.empty(len(cal))
    for i in range(len(cal)):
        x = cal.xs[i]
        try:
            if sample_based:
                out[i] = pit_from_samples(model.draws_at(x), cal.ys[i])
            else:
                out[i] = pit(model_cdf(model, x), cal.ys[i])
        except Exception as exc:  # noqa: BLE001 - contract: wrap with row index
            raise ModelEvalError(i, str(exc)) from exc
    return out


def augment(cal: CalibrationSet, pit_values, k_factor: int, seed: int) -> AugmentedCalibrationSet:
    """Draw K uniform levels per calibration point and record the indicators.

    gamma_{i,j} comes from a counter-based stream keyed on (seed, i), so the
    augmentation of one row never depends on how many rows exist.
    """
    pit_values = np.asarray(pit_values, dtype=float).ravel()
    if pit_values.shape[0] != len(cal):
        raise LengthMismatch(f"{pit_values.shape[0]} pit values for {len(cal)} rows")
    if k_factor < 1:
        raise ValueError("k_factor must be >= 1")
    n = len(cal)
    gamma = np.empty(n * k_factor)
    for i in range(n):
        g = rngmod.row_philox(seed, i).uniform(size=k_factor)
        gamma[i * k_factor : (i + 1) * k_factor] = np.clip(g, 1e-12, 1.0 - 1e-12)
    row_index = np.repeat(np.arange(n), k_factor)
    w = (pit_values[row_index] <= gamma).astype(np.uint8)
    return AugmentedCalibrationSet(
        base_xs=cal.xs,
        base_pit=pit_values,
        row_index=row_index,
        gamma=gamma,
        w=w,
        k_factor=int(k_factor),
    )


# ----------------------------------------------------------------------
# PIT-CDF regression backends
# ----------------------------------------------------------------------

class PitCdfModel(abc.ABC):
    """Fitted estimate of r(gamma; x) = P(PIT <= gamma | x).

    Implementations guarantee predictions in [0, 1] that are nondecreasing in
    gamma for every fixed x, exactly (by construction, not post-hoc repair).
    """

    backend: str = "abstract"

    @abc.abstractmethod
    def predict_curve(self, gammas, x) -> np.ndarray:
        """Evaluate r(gamma; x) on a vector of gamma values at one x."""

    def predict(self, gamma: float, x) -> float:
        return float(self.predict_curve(np.array([gamma]), x)[0])

    def to_json(self) -> dict:
        raise NotImplementedError(f"backend {self.backend} is not serializable")


class IdentityPitCdf(PitCdfModel):
    """The exact identity map r(gamma; x) = gamma (a perfectly calibrated model)."""

    backend = "identity"

    def predict_curve(self, gammas, x) -> np.ndarray:
        return np.asarray(gammas, dtype=float).copy()

    def to_json(self) -> dict:
        return {"format_version": MODEL_FORMAT_VERSION, "backend": self.backend}


@dataclass(frozen=True)
class LocalEmpiricalConfig:
    """Neighborhood rule for the local empirical backend.

    Exactly one of ``k`` (neighbor count) or ``bandwidth`` (radius in
    standardized feature units) must be set.
    """

    k: int | None = None
    bandwidth: float | None = None
    weighting: str = "uniform"

    def __post_init__(self):
        if (self.k is None) == (self.bandwidth is None):
            raise ValueError("set exactly one of k or bandwidth")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.weighting not in ("uniform", "inverse-distance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


class LocalEmpiricalModel(PitCdfModel):
    """Weighted empirical CDF of PIT values over nearest calibration points.

    predict(gamma; x) = sum_i w_i(x) I(pit_i <= gamma), with the weights
    supported on the neighborhood of x in standardized feature space. The
    curve is a nondecreasing step function of gamma by construction.
    """

    backend = "local-empirical"

    def __init__(self, xs, pit_values, cfg: LocalEmpiricalConfig,
                 mean=None, scale=None, tree=None):
        self.xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.pit_values = np.asarray(pit_values, dtype=float).ravel()
        if self.xs.shape[0] != self.pit_values.shape[0]:
            raise LengthMismatch("feature rows and pit values differ in length")
        self.cfg = cfg
        if mean is None:
            mean = self.xs.mean(axis=0)
            scale = self.xs.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self._std_xs = (self.xs - self.mean) / self.scale
        self._tree = tree if tree is not None else cKDTree(self._std_xs)

    def with_pit_values(self, pit_values) -> "LocalEmpiricalModel":
        """Same neighborhoods, new PIT values (used by the null resampler)."""
        return LocalEmpiricalModel(
            self.xs, pit_values, self.cfg,
            mean=self.mean, scale=self.scale, tree=self._tree,
        )

    def _neighborhood(self, x):
        q = (np.asarray(x, dtype=float).ravel() - self.mean) / self.scale
        if self.cfg.k is not None:
            dist, idx = self._tree.query(q, k=self.cfg.k)
            dist = np.atleast_1d(dist)
            idx = np.atleast_1d(idx)
        else:
            idx = np.array(sorted(self._tree.query_ball_point(q, self.cfg.bandwidth)), dtype=int)
            if idx.size == 0:
                dist, idx = self._tree.query(q, k=1)
                dist = np.atleast_1d(dist)
                idx = np.atleast_1d(idx)
            else:
                dist = np.linalg.norm(self._std_xs[idx] - q, axis=1)
        if self.cfg.weighting == "inverse-distance":
            # offset by the mean distance so a coincident point cannot
            # swallow the whole neighborhood
            w = 1.0 / (dist + np.mean(dist) + 1e-300)
        else:
            w = np.ones(idx.size)
        return idx, w / w.sum()

    def predict_curve(self, gammas, x) -> np.ndarray:
        idx, w = self._neighborhood(x)
        pits = self.pit_values[idx]
        order = np.argsort(pits, kind="stable")
        pits_sorted = pits[order]
        cumw = np.cumsum(w[order])
        cumw[-1] = 1.0  # total normalized weight, exact by definition
        pos = np.searchsorted(pits_sorted, np.asarray(gammas, dtype=float), side="right")
        out = np.concatenate([[0.0], cumw])[pos]
        return np.clip(out, 0.0, 1.0)

    def to_json(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "backend": self.backend,
            "config": {
                "k": self.cfg.k,
                "bandwidth": self.cfg.bandwidth,
                "weighting": self.cfg.weighting,
            },
            "standardization": {"mean": self.mean.tolist(), "scale": self.scale.tolist()},
            "xs": self.xs.tolist(),
            "pit_values": self.pit_values.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LocalEmpiricalModel":
        cfg = LocalEmpiricalConfig(**doc["config"])
        return cls(
            np.array(doc["xs"]), np.array(doc["pit_values"]), cfg,
            mean=np.array(doc["standardization"]["mean"]),
            scale=np.array(doc["standardization"]["scale"]),
        )


_MODEL_LOADERS["local-empirical"] = LocalEmpiricalModel.from_json
_MODEL_LOADERS["identity"] = lambda doc: IdentityPitCdf()


def fit_local_empirical(cal: CalibrationSet, pit_values, cfg: LocalEmpiricalConfig) -> LocalEmpiricalModel:
    """Fit the local empirical PIT-CDF estimator (no augmentation needed)."""
    pit_values = np.asarray(pit_values, dtype=float).ravel()
    if pit_values.shape[0] != len(cal):
        raise LengthMismatch(f"{pit_values.shape[0]} pit values for {len(cal)} rows")
    if cfg.k is not None and cfg.k > len(cal):
        raise InsufficientData(f"k={cfg.k} exceeds n={len(cal)}")
    return LocalEmpiricalModel(cal.xs, pit_values, cfg)


def save_pit_model(model: PitCdfModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, indent=1)


def load_pit_model(path) -> PitCdfModel:
    from . import monotone_net  # noqa: F401  (registers its loader)

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    backend = doc.get("backend")
    if backend not in _MODEL_LOADERS:
        raise PitcalError(f"unknown model backend {backend!r}")
    return _MODEL_LOADERS[backend](doc)


# ----------------------------------------------------------------------
# Recalibrated distributions and prediction sets
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RecalibratedDistribution:
    """Initial CDF pushed through the fitted P-P map at one feature point."""

    cdf: GridCdf
    quantile_spline: MonotoneSpline
    pdf: GridDensity

    def quantile(self, p: float) -> float:
        """Leftmost response value whose recalibrated CDF reaches ``p``."""
        from .grid import invert_cdf

        return invert_cdf(self.cdf, p)

    def cdf_value(self, y: float) -> float:
        return pit(self.cdf, y)


@dataclass(frozen=True)
class PredictionSet:
    """Disjoint response intervals with a nominal coverage level."""

    intervals: tuple
    nominal_level: float
    kind: str

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if not lo < hi:
                raise ValueError(f"interval bounds must satisfy lo < hi, got ({lo}, {hi})")
        for (_, hi_prev), (lo_next, _) in zip(ivs, ivs[1:]):
            if lo_next < hi_prev:
                raise ValueError("intervals must be sorted and non-overlapping")
        if self.kind == "interval" and len(ivs) != 1:
            raise ValueError("kind='interval' requires exactly one interval")
        object.__setattr__(self, "intervals", ivs)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        hit = np.zeros(y.shape, dtype=bool)
        for lo, hi in self.intervals:
            hit |= (y >= lo) & (y <= hi)
        return hit

    def total_size(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def to_json(self) -> dict:
        return {
            "intervals": [list(iv) for iv in self.intervals],
            "nominal_level": self.nominal_level,
            "kind": self.kind,
        }


def recalibrate(model, r: PitCdfModel, x) -> RecalibratedDistribution:
    """Reshape the initial distribution at ``x`` through the fitted map.

    The recalibrated CDF on the grid is r(F_init(y); x), endpoint-snapped to
    {0, 1} and made nondecreasing by a cumulative maximum before spline
    fitting. The density is the spline derivative, clipped and renormalized;
    the quantile spline interpolates the strictly increasing support.
    """
    x = np.asarray(x, dtype=float)
    initial = model_cdf(model, x)
    grid = initial.grid
    vals = np.asarray(r.predict_curve(initial.values, x), dtype=float)
    if vals.max() - vals.min() < 1e-9:
        raise DegenerateRecalibration("P-P map collapsed the CDF to a constant")
    vals = np.clip(np.maximum.accumulate(vals), 0.0, 1.0)
    vals[0] = 0.0
    vals[-1] = 1.0
    cdf = GridCdf(grid, vals)

    deriv = cdf.spline.derivative(grid.points)
    pdf = renormalize_density(GridDensity(grid, np.maximum(deriv, 0.0)))

    p_knots, first = np.unique(cdf.values, return_index=True)
    quantile_spline = fit_monotone_spline(p_knots, grid.points[first])
    return RecalibratedDistribution(cdf=cdf, quantile_spline=quantile_spline, pdf=pdf)


class RecalibratedInitialModel:
    """Expose a recalibrated distribution family as a new initial model.

    Useful for re-running diagnostics after recalibration: PIT values under
    this model should look conditionally uniform if the map fixed the original
    miscalibration.
    """

    sample_based = False

    def __init__(self, base_model, r: PitCdfModel):
        self.base_model = base_model
        self.r = r
        self.grid = base_model.grid

    def density_at(self, x) -> GridDensity:
        return recalibrate(self.base_model, self.r, x).pdf

    def cdf_at(self, x) -> GridCdf:
        return recalibrate(self.base_model, self.r, x).cdf


def calpit_interval(rd: RecalibratedDistribution, alpha: float) -> PredictionSet:
    """Central interval [q(alpha/2), q(1 - alpha/2)] of the recalibrated CDF."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lo = rd.quantile(0.5 * alpha)
    hi = rd.quantile(1.0 - 0.5 * alpha)
    return PredictionSet(((lo, hi),), nominal_level=1.0 - alpha, kind="interval")


def _mass_above(pts: np.ndarray, f: np.ndarray, t: float) -> float:
    """Trapezoid mass of the piecewise-linear density on {f >= t}."""
    a, b = f[:-1], f[1:]
    h = np.diff(pts)
    both = (a >= t) & (b >= t)
    left = (a >= t) & (b < t)
    right = (a < t) & (b >= t)
    full = np.where(both, 0.5 * (a + b) * h, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_left = np.where(left, (a - t) / np.where(a != b, a - b, 1.0), 0.0)
        s_right = np.where(right, (b - t) / np.where(a != b, b - a, 1.0), 0.0)
    part_left = np.where(left, 0.5 * (a + t) * s_left * h, 0.0)
    part_right = np.where(right, 0.5 * (b + t) * s_right * h, 0.0)
    return float(np.sum(full + part_left + part_right))


def _level_intervals(pts: np.ndarray, f: np.ndarray, t: float):
    """Components of {y: f(y) >= t} with linearly interpolated edges."""
    intervals = []
    n = pts.size
    open_left = None
    if f[0] >= t:
        open_left = float(pts[0])
    for i in range(n - 1):
        a, b = f[i], f[i + 1]
        if a >= t and b < t:
            s = (a - t) / (a - b)
            intervals.append((open_left, float(pts[i] + s * (pts[i + 1] - pts[i]))))
            open_left = None
        elif a < t and b >= t:
            s = (b - t) / (b - a)
            open_left = float(pts[i + 1] - s * (pts[i + 1] - pts[i]))
    if open_left is not None:
        intervals.append((open_left, float(pts[-1])))
    return [(lo, hi) for lo, hi in intervals if hi > lo]


def _interval_mass(pts: np.ndarray, f: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid mass of the piecewise-linear density over [lo, hi]."""
    grid = np.unique(np.concatenate([pts[(pts > lo) & (pts < hi)], [lo, hi]]))
    vals = np.interp(grid, pts, f)
    return float(np.trapezoid(vals, grid))


def _merge_intervals(intervals, gap_tol: float):
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo - merged[-1][1] <= gap_tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged if hi > lo]


def calpit_hpd(rd: RecalibratedDistribution, alpha: float,
               mass_tol: float = 0.005, max_iter: int = 200) -> PredictionSet:
    """Highest-density set of the recalibrated density with mass 1 - alpha.

    The density threshold is found by bisection on the level; set components
    take their edges from linear interpolation between grid points. When the
    target mass falls inside a flat density stretch (the threshold mass jumps),
    cells at the threshold are included left to right, the last one truncated,
    until the target is met.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    pts = rd.pdf.grid.points
    f = rd.pdf.values
    total = np.trapezoid(f, pts)
    target = (1.0 - alpha) * total
    span = pts[-1] - pts[0]
    fmax = float(f.max())

    # upper bracket strictly above the density maximum: its level set is
    # empty, so flat densities resolve through the tie-handling path
    lo_t, hi_t = 0.0, fmax * (1.0 + 1e-12) + 1e-300
    t = 0.0
    converged = False
    for _ in range(max_iter):
        t = 0.5 * (lo_t + hi_t)
        m = _mass_above(pts, f, t)
        if abs(m - target) <= 0.2 * mass_tol:
            converged = True
            break
        if m > target:
            lo_t = t
        else:
            hi_t = t
        if hi_t - lo_t <= 1e-13 * max(fmax, 1.0):
            break

    if converged:
        intervals = _level_intervals(pts, f, t)
    else:
        # flat stretch at the threshold: take the core set above the bracket,
        # then add threshold cells left to right until the mass target is met
        core = _level_intervals(pts, f, hi_t)
        core_mass = sum(_interval_mass(pts, f, lo, hi) for lo, hi in core)
        deficit = target - core_mass
        at_level = _level_intervals(pts, f, lo_t)
        candidates = _subtract_intervals(at_level, core)
        chosen = []
        for lo, hi in candidates:
            if deficit <= 0:
                break
            m = _interval_mass(pts, f, lo, hi)
            if m <= deficit:
                chosen.append((lo, hi))
                deficit -= m
            else:
                cut = _mass_cut(pts, f, lo, hi, deficit)
                chosen.append((lo, cut))
                deficit = 0.0
        intervals = _merge_intervals(core + chosen, gap_tol=1e-12 * span)

    intervals = _merge_intervals(intervals, gap_tol=1e-12 * span)
    mass = sum(_interval_mass(pts, f, lo, hi) for lo, hi in intervals) / total
    if abs(mass - (1.0 - alpha)) > mass_tol:
        raise HpdSearchFailed(
            f"HPD mass {mass:.6f} misses target {1.0 - alpha:.6f} after {max_iter} iterations"
        )
    return PredictionSet(tuple(intervals), nominal_level=1.0 - alpha, kind="hpd")


def _subtract_intervals(base, remove):
    """Set difference of two sorted unions of intervals."""
    out = []
    for lo, hi in base:
        pieces = [(lo, hi)]
        for rlo, rhi in remove:
            nxt = []
            for plo, phi in pieces:
                if rhi <= plo or rlo >= phi:
                    nxt.append((plo, phi))
                else:
                    if plo < rlo:
                        nxt.append((plo, rlo))
                    if rhi < phi:
                        nxt.append((rhi, phi))
            pieces = nxt
        out.extend(pieces)
    return [(lo, hi) for lo, hi in sorted(out) if hi > lo]


def _mass_cut(pts: np.ndarray, f: np.ndarray, lo: float, hi: float, deficit: float) -> float:
    """Rightmost point c in [lo, hi] with mass over [lo, c] equal to deficit."""
    grid = np.unique(np.concatenate([pts[(pts > lo) & (pts < hi)], [lo, hi]]))
    vals = np.interp(grid, pts, f)
    acc = 0.0
    for i in range(grid.size - 1):
        seg = 0.5 * (vals[i] + vals[i + 1]) * (grid[i + 1] - grid[i])
        if acc + seg >= deficit:
            a, b = vals[i], vals[i + 1]
            h = grid[i + 1] - grid[i]
            rem = deficit - acc
            if abs(b - a) < 1e-14 * max(abs(a), 1.0):
                s = rem / max(a, 1e-300)
            else:
                slope = (b - a) / h
                disc = max(a * a + 2.0 * slope * rem, 0.0)
                s = (np.sqrt(disc) - a) / slope
            return float(grid[i] + min(max(s, 0.0), h))
        acc += seg
    return float(hi)


def estimated_ot(rd: RecalibratedDistribution, initial_cdf: GridCdf, y: float) -> float:
    """Transport of a response value: recalibrated quantile of its initial CDF."""
    return rd.quantile(pit(initial_cdf, y))
