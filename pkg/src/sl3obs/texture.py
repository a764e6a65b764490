"""Procedural test texture used as the shipped reference image."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .image import RasterImage

# (blur sigma in pixels, relative amplitude) per octave
OCTAVES = ((24.0, 1.0), (12.0, 0.6), (6.0, 0.35), (3.0, 0.2))


def make_texture(width: int = 256, height: int = 254, seed: int = 0,
                 octaves=OCTAVES) -> RasterImage:
    """Sum of band-limited noise layers, stretched to [0, 1]."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width))
    for sigma, amp in octaves:
        layer = gaussian_filter(rng.standard_normal((height, width)), sigma)
        img += amp * layer / layer.std()
    img = (img - img.min()) / (img.max() - img.min())
    return RasterImage(img)
