"""Music emotion recognition with deep audio embeddings and classical baselines."""

from .errors import MertkError

__version__ = "0.1.0"
__all__ = ["MertkError", "__version__"]
