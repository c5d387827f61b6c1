"""minutecast: per-minute treatment-activity prediction."""

__version__ = "0.1.0"
