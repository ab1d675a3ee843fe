"""Penultimate-layer feature export for image manifests.

Runs a frozen ImageNet-architecture backbone over a class-per-directory image
tree and writes the activations as a ``DTRC`` feature file, the wire format
consumed by the ``detrac`` pipeline. The backbone itself is never trained
here; the downstream classifier replaces its final layer entirely.
"""

from .backbone import BACKBONE_WIDTHS, ExtractorConfig, WeightsUnavailable, load_backbone
from .errors import ExtractorError
from .export import export_features

__version__ = "0.1.0"

__all__ = [
    "BACKBONE_WIDTHS",
    "ExtractorConfig",
    "ExtractorError",
    "WeightsUnavailable",
    "export_features",
    "load_backbone",
]
