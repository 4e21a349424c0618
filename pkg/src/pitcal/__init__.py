"""Conditional recalibration of predictive distributions.

Diagnose where a conditional distribution estimate is miscalibrated, learn a
single probability-probability map from calibration data, and reshape the
estimate into a conditionally calibrated one, with prediction intervals,
highest-density sets, local coverage tests, conformal baselines, synthetic
oracles, and a Monte Carlo coverage benchmark harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDensity,
    DegenerateRecalibration,
    EmptySample,
    HpdSearchFailed,
    InsufficientCalibration,
    InsufficientData,
    InvalidBandwidth,
    InvalidDensity,
    InvalidGrid,
    LengthMismatch,
    ModelEvalError,
    NonMonotoneInput,
    NonStationaryVar,
    PitcalError,
    TrainingDiverged,
)
from .grid import (
    GridCdf,
    GridDensity,
    MonotoneSpline,
    YGrid,
    cdf_from_density,
    default_grid,
    fit_monotone_spline,
    invert_cdf,
    pit,
    pit_from_samples,
    renormalize_density,
    widen_density,
)
from .models import (
    CallableDensityModel,
    GaussianInitialModel,
    MarginalHistogramModel,
    SampleBasedModel,
    UniformInitialModel,
)
from .calibrate import (
    AugmentedCalibrationSet,
    CalibrationSet,
    IdentityPitCdf,
    LocalEmpiricalConfig,
    LocalEmpiricalModel,
    PitCdfModel,
    PredictionSet,
    RecalibratedDistribution,
    RecalibratedInitialModel,
    augment,
    calpit_hpd,
    calpit_interval,
    compute_pit_values,
    estimated_ot,
    fit_local_empirical,
    load_pit_model,
    recalibrate,
    save_pit_model,
)
from .monotone_net import MonotoneNetConfig, MonotoneNetModel, fit_monotone_net
from .diagnose import (
    AlpCurve,
    LocalTestResult,
    alp_curve,
    cde_loss,
    local_test_statistic,
    mc_confidence_band,
    mc_p_value,
)
from .bench import (
    CoverageReport,
    ExperimentRecipe,
    classify_coverage,
    conditional_coverage,
    run_experiment,
)
from .baselines import ConformalCalibration, DcpModel, RegSplitModel, dcp, fit_knn_mean, reg_split

__all__ = [
    "__version__",
    # errors
    "PitcalError", "InvalidGrid", "InvalidDensity", "DegenerateDensity",
    "InvalidBandwidth", "NonMonotoneInput", "EmptySample", "LengthMismatch",
    "InsufficientData", "InsufficientCalibration", "TrainingDiverged",
    "DegenerateRecalibration", "HpdSearchFailed", "ModelEvalError",
    "NonStationaryVar", "ConfigError",
    # grid
    "YGrid", "GridDensity", "GridCdf", "MonotoneSpline", "fit_monotone_spline",
    "cdf_from_density", "invert_cdf", "pit", "pit_from_samples",
    "renormalize_density", "widen_density", "default_grid",
    # initial models
    "GaussianInitialModel", "UniformInitialModel", "MarginalHistogramModel",
    "CallableDensityModel", "SampleBasedModel",
    # calibration
    "CalibrationSet", "AugmentedCalibrationSet", "PitCdfModel", "IdentityPitCdf",
    "LocalEmpiricalConfig", "LocalEmpiricalModel", "RecalibratedDistribution",
    "RecalibratedInitialModel", "PredictionSet", "compute_pit_values", "augment",
    "fit_local_empirical", "recalibrate", "calpit_interval", "calpit_hpd",
    "estimated_ot", "save_pit_model", "load_pit_model",
    "MonotoneNetConfig", "MonotoneNetModel", "fit_monotone_net",
    # diagnostics
    "AlpCurve", "LocalTestResult", "alp_curve", "local_test_statistic",
    "mc_p_value", "mc_confidence_band", "cde_loss",
    # bench
    "ExperimentRecipe", "CoverageReport", "conditional_coverage",
    "classify_coverage", "run_experiment",
    # baselines
    "ConformalCalibration", "RegSplitModel", "DcpModel", "reg_split", "dcp",
    "fit_knn_mean",
]
