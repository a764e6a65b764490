"""Direct intensity-based homography observer on SL(3)."""

from . import degeneracy, image, observer, sl3, sphere
from .image import RasterImage, build_pixel_grid, load_image, save_image
from .observer import (DualGain, InverseHessianGain, ScalarGain, check_nondegeneracy,
                       simulate)

__all__ = [
    "degeneracy", "image", "observer", "sl3", "sphere",
    "RasterImage", "build_pixel_grid", "load_image", "save_image",
    "ScalarGain", "InverseHessianGain", "DualGain", "check_nondegeneracy", "simulate",
]
