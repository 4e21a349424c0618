"""Synthetic data-generating processes with exact oracle access."""

from .sinharcsinh import (
    SinhArcsinhParams,
    sinh_arcsinh_cdf,
    sinh_arcsinh_pdf,
    sinh_arcsinh_quantile,
    sinh_arcsinh_sample,
)
from .examples import (
    Example1Oracle,
    Example2Oracle,
    GeneratedData,
    TwoGroupConfig,
    sample_example1,
    sample_example2,
)
from .tc import (
    StormRecord,
    TcChunkResult,
    TcModelConfig,
    chunk_tc,
    default_tc_config,
    simulate_tc,
    tc_summary_features,
    var_spectral_radius,
    write_storms_jsonl,
)

__all__ = [
    "SinhArcsinhParams",
    "sinh_arcsinh_cdf",
    "sinh_arcsinh_pdf",
    "sinh_arcsinh_quantile",
    "sinh_arcsinh_sample",
    "Example1Oracle",
    "Example2Oracle",
    "GeneratedData",
    "TwoGroupConfig",
    "sample_example1",
    "sample_example2",
    "StormRecord",
    "TcChunkResult",
    "TcModelConfig",
    "chunk_tc",
    "default_tc_config",
    "simulate_tc",
    "tc_summary_features",
    "var_spectral_radius",
    "write_storms_jsonl",
]
