"""Sequential anomaly detection over correlated binary processes with deep actor-critic learning."""

__version__ = "0.1.0"
