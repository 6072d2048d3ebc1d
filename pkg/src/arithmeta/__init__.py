"""Multi-domain inner/outer-loop training with arithmetic-weighted gradients."""

__version__ = "0.1.0"
