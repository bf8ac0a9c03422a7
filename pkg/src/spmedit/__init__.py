"""Semantic image editing with style-preserved modulation and a progressive
generator pyramid."""

__version__ = "0.1.0"

from .modulation import SPADEBlock, SPMBlock, channel_normalize, spm_fuse
from .networks import PyramidConfig, build_pyramid, pyramid_forward, receptive_field
from .training import OptimConfig, Trainer
from .editing import EditRequest, edit, panorama

__all__ = [
    "SPADEBlock", "SPMBlock", "channel_normalize", "spm_fuse",
    "PyramidConfig", "build_pyramid", "pyramid_forward", "receptive_field",
    "OptimConfig", "Trainer", "EditRequest", "edit", "panorama",
]
