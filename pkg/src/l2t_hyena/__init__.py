"""Adaptive-loss training engine for a gated long-convolution language model.

Subpackages: ``corpus`` (data), ``hyena`` (student model), ``dln`` (dynamic
loss network), ``teacher`` (memory-augmented loss predictor), ``trainer``
(optimizers and the training loop), ``cli`` (commands and metrics export).
"""

__version__ = "0.1.0"
