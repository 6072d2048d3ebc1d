"""Read-only renderers for the training engine's CSV exports."""

__version__ = "0.1.0"
