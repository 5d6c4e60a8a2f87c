"""Decreasing-step Euler schemes for invariant measures, with empirical checks of their convergence."""

__version__ = "0.1.0"

from .measure import Ensemble, MetricConfig  # noqa: E402
from .schedule import SigmaParams, TimeGrid  # noqa: E402

__all__ = ["Ensemble", "MetricConfig", "TimeGrid", "SigmaParams", "__version__"]
