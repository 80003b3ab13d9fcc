"""Climate anomaly correlation networks from gridded daily fields."""

__version__ = "0.1.0"
