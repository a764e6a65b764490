import os

import numpy as np
import pytest

from sl3obs.image import RasterImage, as_spherical, build_pixel_grid

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SIM_CFG = os.path.join(REPO, "paper_sim.cfg")
TEXTURE = os.path.join(REPO, "data", "texture_256x254.pgm")


def blob_image(n: int = 128, sigma: float = 20.0, seed: int = 3) -> RasterImage:
    """Smooth synthetic image: Gaussian blobs faded to zero at the border."""
    rng = np.random.default_rng(seed)
    v, u = np.mgrid[0:n, 0:n].astype(float)
    f = np.zeros((n, n))
    for _ in range(6):
        c = rng.uniform(0.35 * n, 0.65 * n, 2)
        a = rng.uniform(-1, 1)
        s = sigma * rng.uniform(0.8, 1.2)
        f += a * np.exp(-((u - c[0]) ** 2 + (v - c[1]) ** 2) / (2 * s**2))
    f = 0.5 + 0.45 * f / np.abs(f).max()
    x = (u - (n - 1) / 2) / (n / 2 - 4)
    y = (v - (n - 1) / 2) / (n / 2 - 4)
    fade = np.where((abs(x) < 1) & (abs(y) < 1),
                    np.cos(np.pi / 2 * x) ** 2 * np.cos(np.pi / 2 * y) ** 2, 0.0)
    return RasterImage(f * fade)


@pytest.fixture(scope="session")
def smooth_raster():
    return blob_image()


@pytest.fixture(scope="session")
def smooth_setup(smooth_raster):
    return smooth_raster, as_spherical(smooth_raster), build_pixel_grid(smooth_raster)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, filled by tests/test_acceptance.py and printed at the end
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcd")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
