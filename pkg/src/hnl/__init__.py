"""Hierarchical Neural Laplace forecasting with coordination, metrics and dispatch."""
from .laplace import BandPartition, CoefficientSet, build_band_partition, ilt_evaluate, temporal_components
from .forecasters import (ForecastBundle, LaplaceForecaster, NetConfig, forecast_bundle, train_direct,
                          train_hnl, train_nl)
from .reconcile import bu_reconcile, build_aggregation, opt_reconcile
from .metrics import MetricsReport, block_downsample, mce, rmse_freq, rmse_time, tce

__version__ = "0.1.0"

__all__ = [
    "BandPartition",
    "CoefficientSet",
    "build_band_partition",
    "ilt_evaluate",
    "temporal_components",
    "ForecastBundle",
    "LaplaceForecaster",
    "NetConfig",
    "forecast_bundle",
    "train_direct",
    "train_hnl",
    "train_nl",
    "bu_reconcile",
    "build_aggregation",
    "opt_reconcile",
    "MetricsReport",
    "block_downsample",
    "mce",
    "rmse_freq",
    "rmse_time",
    "tce",
]
