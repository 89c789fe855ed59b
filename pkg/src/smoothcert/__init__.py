"""smoothcert: certification of smoothed classifiers with per-input noise
scales, made sound by a memory of non-overlapping certified regions."""

from . import classifiers, memory, pipeline, sigma_opt, smoothing, stats, synthetic

__all__ = ["classifiers", "memory", "pipeline", "sigma_opt", "smoothing",
           "stats", "synthetic"]

__version__ = "0.1.0"
