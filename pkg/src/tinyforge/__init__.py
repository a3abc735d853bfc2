"""tinyforge: a desk-scale TinyML pipeline.

Dataset ingestion, DSP feature extraction, neural network training on a
small operator IR, post-training int8 quantization, interpreter-free C code
generation, device-profile resource estimation, constraint-aware random
search, and streaming-detection calibration.
"""

__version__ = "0.1.0"

from .errors import TinyForgeError

__all__ = ["TinyForgeError", "__version__"]
