"""Infrared/visible image fusion with the non-subsampled shearlet transform
and a multi-state contextual hidden Markov model."""

from .context import ContextWeights
from .errors import FusionError
from .fusion import FusionConfig, fuse_images
from .image import GrayImage, check_pair, load_image, save_image
from .mchmm import MchmmConfig
from .metrics import MetricsReport, report
from .nsst import DecompositionSpec, decompose, reconstruct

__all__ = [
    "ContextWeights",
    "DecompositionSpec",
    "FusionConfig",
    "FusionError",
    "GrayImage",
    "MchmmConfig",
    "MetricsReport",
    "check_pair",
    "decompose",
    "fuse_images",
    "load_image",
    "reconstruct",
    "report",
    "save_image",
]

__version__ = "0.1.0"
