"""Exception hierarchy.

Every error carries a short machine-readable ``ident`` so the CLI can emit
structured error JSON; the message stays human-readable.
"""


class FreqPoisonError(Exception):
    """Base class for all toolkit errors."""

    ident = "error"

    def __init__(self, message, ident=None):
        super().__init__(message)
        if ident is not None:
            self.ident = ident

    def to_json(self):
        return {"error": self.ident, "message": str(self)}


class GeometryError(FreqPoisonError):
    """Bad image/spectrogram shape, padding, or divisibility."""

    ident = "geometry"


class RegionError(FreqPoisonError):
    """Malformed region path or region/level mismatch."""

    ident = "bad-region"


class DatasetError(FreqPoisonError):
    """Dataset loading, validation, or persistence failure."""

    ident = "dataset"


class ConfigError(FreqPoisonError):
    """Invalid attack or run configuration."""

    ident = "config"


class MetricError(FreqPoisonError):
    """Invalid metric input (empty sets, shape mismatch, bad counts)."""

    ident = "metric"
