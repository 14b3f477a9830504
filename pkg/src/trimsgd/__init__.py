"""Label-noised trimmed SGD: from-scratch networks, data loading and experiments."""

from trimsgd.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
