"""Large deviations of sums of truncated heavy-tailed random vectors."""

__version__ = "0.1.0"

from .errors import AssumptionError, ConfigError, QuadratureError
from .model import (LightTailLaw, PowerLawModel, SpectralMeasure, TruncationSchedule,
                    classify_regime, norming_a, norming_b, sample_h, sample_row, tail_prob,
                    truncate, truncated_mean)
from .regions import RadialCapRegion, SphereCap

__all__ = [
    "AssumptionError", "ConfigError", "QuadratureError",
    "LightTailLaw", "PowerLawModel", "SpectralMeasure", "TruncationSchedule",
    "classify_regime", "norming_a", "norming_b", "sample_h", "sample_row", "tail_prob",
    "truncate", "truncated_mean", "RadialCapRegion", "SphereCap",
]
