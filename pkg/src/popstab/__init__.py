"""Population stability metrics for credit scorecard monitoring."""

__version__ = "0.1.0"
