"""Reference images with a continuous stabilizer, and invariance checks.

An image is unobservable along ``D`` in sl(3) when it is constant on the
orbits ``t -> rho(exp(tD), x)``. Images are synthesised by propagating rays
along those orbits: every pixel ray is flowed over ``t in [-t_span, t_span]``
and labelled by an orbit key, the closest approach of its orbit to a few fixed
anchor rays. Random seed rays carry random intensities, which are spread
smoothly over neighbouring orbits in key space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sl3
from .image import RasterImage, as_spherical, default_calibration, pixel_to_ray, ray_to_pixel
from .sphere import act_rho, normalize


class EmptyRaster(ValueError):
    """No orbit sample landed inside the image grid."""


@dataclass(frozen=True)
class SymmetryGenerator:
    d: np.ndarray
    label: str = ""

    def __post_init__(self):
        d = sl3.as_algebra(np.array(self.d, dtype=float), tol=1e-10)
        if np.linalg.norm(d) == 0:
            raise ValueError("generator must be nonzero")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_coords(cls, coords, label: str = "") -> "SymmetryGenerator":
        return cls(sl3.wedge(coords), label)

    @property
    def coords(self) -> np.ndarray:
        return sl3.vee(self.d)


def builtin_generators() -> list[SymmetryGenerator]:
    """Six one-parameter subgroups with qualitatively different orbits.

    Coefficients (basis coordinates) are scaled so that the default
    ``t_span = 2`` sweeps every orbit across a 53 degree field of view.
    """
    b = sl3.BASIS
    return [
        SymmetryGenerator(2.5 * b[4], "rotation about e3 (2.5 B5)"),
        SymmetryGenerator(3.5 * b[0], "anisotropic scaling (3.5 B1)"),
        SymmetryGenerator(3.5 * b[1], "shear (3.5 B2)"),
        SymmetryGenerator(1.5 * b[7], "zoom (1.5 B8)"),
        SymmetryGenerator(3.0 * b[4] + 1.5 * b[0], "elliptic rotation (3 B5 + 1.5 B1)"),
        SymmetryGenerator(b[3] + 2.0 * b[6], "tilt about e1 (B4 + 2 B7)"),
    ]


def _flows(d: np.ndarray, ts: np.ndarray) -> np.ndarray:
    # rho(exp(tD), x) is the normalisation of exp(-tD) x
    return np.stack([sl3.group_exp(-t * d) for t in ts])


def orbit_key(rays: np.ndarray, d: np.ndarray, anchors: np.ndarray,
              ts: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Closest chord distance between each ray's orbit and each anchor.

    Returns shape ``(len(rays), len(anchors))``. The minimum over the
    sampled parameters is refined with a parabola through the neighbouring
    samples. Several anchors are needed because orbits of node-type flows
    share a limit point, and a single closest-approach distance cannot tell
    apart the orbits that reach it.
    """
    flows = _flows(d, ts)
    out = np.empty((len(rays), len(anchors)))
    rows = None
    for lo in range(0, len(rays), chunk):
        y = normalize(np.einsum("tij,nj->nti", flows, rays[lo:lo + chunk]))
        rows = np.arange(len(y))
        for k, anchor in enumerate(anchors):
            d2 = np.sum((y - anchor) ** 2, axis=-1)
            j = np.argmin(d2, axis=1)
            jj = np.clip(j, 1, len(ts) - 2)
            a, m, c = d2[rows, jj - 1], d2[rows, jj], d2[rows, jj + 1]
            curv = a - 2 * m + c
            with np.errstate(divide="ignore", invalid="ignore"):
                refined = m - (c - a) ** 2 / (8 * curv)
            best = np.where((j == jj) & (curv > 0), refined, d2[rows, j])
            out[lo:lo + chunk, k] = np.sqrt(np.clip(best, 0.0, None))
    return out


def generate_degenerate_image(gen: SymmetryGenerator, width: int, height: int, calib=None,
                              n_seeds: int = 8, n_steps: int = 400, t_span: float = 2.0,
                              rng_seed: int = 42, n_anchors: int = 3) -> RasterImage:
    """Render an image constant on the orbits of ``gen``.

    Seed rays receive random intensities; every pixel takes a Gaussian-kernel
    average of the seed intensities, weighted by how close its orbit key is
    to each seed's key. The result is stretched to [0, 1].
    """
    if n_seeds < 1 or n_steps < 2:
        raise ValueError("need n_seeds >= 1 and n_steps >= 2")
    if calib is None:
        calib = default_calibration(width, height)
    rng = np.random.default_rng(rng_seed)
    corner = [width - 1, height - 1]
    seeds = pixel_to_ray(calib, rng.uniform([0, 0], corner, size=(n_seeds, 2)))
    levels = rng.uniform(0.0, 1.0, size=n_seeds)
    anchors = pixel_to_ray(calib, rng.uniform([0, 0], corner, size=(n_anchors, 2)))
    ts = np.linspace(-t_span, t_span, n_steps)

    orbit_pts = normalize(np.einsum("tij,nj->nti", _flows(gen.d, ts), seeds))
    _, inside = ray_to_pixel(calib, orbit_pts, (height, width))
    if not np.any(inside):
        raise EmptyRaster("no orbit sample falls inside the grid")

    vv, uu = np.mgrid[0:height, 0:width]
    rays = pixel_to_ray(calib, np.stack([uu, vv], axis=-1).reshape(-1, 2).astype(float))
    key = orbit_key(rays, gen.d, anchors, ts)
    seed_key = orbit_key(seeds, gen.d, anchors, ts)

    spread = np.sqrt(np.mean(np.sum((key - key.mean(axis=0)) ** 2, axis=1)))
    sigma = max(spread, 1e-12) / np.sqrt(n_seeds)
    d2 = np.sum((key[:, None, :] - seed_key[None, :, :]) ** 2, axis=-1)
    wts = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) / (2 * sigma**2))
    data = (wts @ levels) / wts.sum(axis=1)
    lo, hi = data.min(), data.max()
    if hi - lo > 1e-9:
        data = (data - lo) / (hi - lo)
    return RasterImage(np.clip(data, 0.0, 1.0).reshape(height, width), calib)


@dataclass(frozen=True)
class StabilizerResidual:
    mean_abs: float
    max_abs: float
    count: int


def verify_stabilizer(image, gen: SymmetryGenerator, t_values, n_samples: int = 2000,
                      rng_seed: int = 0, margin: float = 0.1) -> StabilizerResidual:
    """Compare I(rho(exp(tD), x)) with I(x) at random interior rays.

    Rays are drawn from the central part of the raster (``margin`` of each
    side excluded); pairs whose flowed ray leaves the domain are skipped.
    """
    sph = as_spherical(image)
    raster = sph.raster
    h, w = raster.shape
    rng = np.random.default_rng(rng_seed)
    lo = np.array([margin * (w - 1), margin * (h - 1)])
    hi = np.array([(1 - margin) * (w - 1), (1 - margin) * (h - 1)])
    x = pixel_to_ray(raster.calib, rng.uniform(lo, hi, size=(n_samples, 2)))
    base = sph.sample(x)
    diffs = []
    for t in t_values:
        g = sl3.group_exp(t * gen.d)
        y = x if np.array_equal(g, np.eye(3)) else act_rho(g, x)
        ok = sph.in_domain(y)
        diffs.append(np.abs(sph.sample(y[ok]) - base[ok]))
    diffs = np.concatenate(diffs) if diffs else np.zeros(0)
    if diffs.size == 0:
        return StabilizerResidual(0.0, 0.0, 0)
    return StabilizerResidual(float(diffs.mean()), float(diffs.max()), int(diffs.size))
