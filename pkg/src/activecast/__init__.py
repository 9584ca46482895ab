"""Forecasting-pipeline library and benchmark CLI for epidemic active-case
prediction: four feature-selection strategies crossed with three forecaster
families over 1- to 30-day horizons, scored by Monte-Carlo cross-validation.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .featsel import SelectionMask
from .ingest import Panel
from .models import ForecasterConfig, TrainedForecaster
from .samples import FeatureSpec, SampleSet, Scaler

__all__ = [
    "FeatureSpec",
    "ForecasterConfig",
    "Panel",
    "RunConfig",
    "SampleSet",
    "Scaler",
    "SelectionMask",
    "TrainedForecaster",
    "__version__",
]
