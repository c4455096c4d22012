"""Pixel-linking text detection pipeline (non-neural parts).

Ground-truth label/weight encoding, the weighted pixel/link loss with
analytic gradients, the link-based connected-component decoder, multi-scale
map fusion, geometric augmentation and detection evaluation.
"""

__version__ = "0.1.0"
