"""Raster images, their spherical image maps, and discrete quadrature.

Pixel coordinates follow the usual convention: ``u`` is the column and
``v`` the row index, pixel centres sit at integer coordinates, and a ray
``x`` maps to the pixel ``dehomogenise(K x)``. The spherical domain of a
raster is the set of rays landing inside ``[0, w-1] x [0, h-1]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .sphere import act_rho, normalize, tangent_project


# Pixel coordinates this close to an integer are treated as lying on a
# cell edge of the bilinear interpolant.
KINK_TOL = 1e-6
# Slack (in pixels) on the domain test, so grid rays pushed through an
# identity-like warp do not drop off the border by round-off.
DOMAIN_TOL = 1e-9


class UnsupportedFormat(ValueError):
    pass


class MalformedHeader(ValueError):
    pass


def default_calibration(width: int, height: int) -> np.ndarray:
    """Principal point at the grid centre, focal length equal to the width."""
    f = float(width)
    return np.array([[f, 0.0, (width - 1) / 2.0],
                     [0.0, f, (height - 1) / 2.0],
                     [0.0, 0.0, 1.0]])


def pixel_to_ray(calib, uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    hom = np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1)
    return normalize(hom @ np.linalg.inv(calib).T)


def ray_to_pixel(calib, x, shape=None) -> tuple[np.ndarray, np.ndarray]:
    """Project rays to pixel coordinates.

    Returns ``(uv, ok)``. ``ok`` is False for rays behind the camera and,
    when ``shape = (height, width)`` is given, for rays landing outside the
    grid; ``uv`` is NaN wherever the ray is behind the camera.
    """
    p = np.asarray(x, dtype=float) @ np.asarray(calib, dtype=float).T
    front = p[..., 2] > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.where(front[..., None], p[..., :2] / p[..., 2:3], np.nan)
    ok = front
    if shape is not None:
        h, w = shape
        with np.errstate(invalid="ignore"):
            ok = ok & (uv[..., 0] >= -DOMAIN_TOL) & (uv[..., 0] <= w - 1 + DOMAIN_TOL) \
                & (uv[..., 1] >= -DOMAIN_TOL) & (uv[..., 1] <= h - 1 + DOMAIN_TOL)
    return uv, ok


@dataclass(frozen=True)
class RasterImage:
    """Intensities in [0, 1] on a pixel grid, with a pinhole calibration.

    ``mask`` optionally marks which pixels carry data (e.g. after rendering
    a warped image whose domain does not cover the whole grid); rays whose
    interpolation stencil touches an invalid pixel are outside the domain.
    """

    data: np.ndarray
    calib: np.ndarray = None
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or min(data.shape) < 2:
            raise ValueError(f"raster must be 2-D and at least 2x2, got {data.shape}")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        data.setflags(write=False)
        calib = self.calib
        if calib is None:
            calib = default_calibration(data.shape[1], data.shape[0])
        calib = np.array(calib, dtype=float)
        if calib.shape != (3, 3) or np.any(np.diag(calib) <= 0) \
                or np.any(np.tril(calib, -1) != 0):
            raise ValueError("calibration must be upper triangular with positive diagonal")
        calib.setflags(write=False)
        mask = self.mask
        if mask is not None:
            mask = np.array(mask, dtype=bool)
            if mask.shape != data.shape:
                raise ValueError("mask must have the raster's shape")
            mask = None if mask.all() else mask
        if mask is not None:
            mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "calib", calib)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _bilinear(arr: np.ndarray, u: np.ndarray, v: np.ndarray, lo: int = 0) -> np.ndarray:
    """Bilinear lookup; caller guarantees lo <= u <= w-1-lo (same for v)."""
    h, w = arr.shape
    u0 = np.clip(np.floor(u).astype(np.intp), lo, w - 2 - lo)
    v0 = np.clip(np.floor(v).astype(np.intp), lo, h - 2 - lo)
    fu = u - u0
    fv = v - v0
    top = arr[v0, u0] * (1 - fu) + arr[v0, u0 + 1] * fu
    bot = arr[v0 + 1, u0] * (1 - fu) + arr[v0 + 1, u0 + 1] * fu
    return top * (1 - fv) + bot * fv


class SphericalImage:
    """An image map on the sphere, zero outside its domain."""

    def in_domain(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def warp(self, h) -> "SphericalImage":
        h = np.asarray(h, dtype=float)
        if np.array_equal(h, np.eye(3)):
            return self
        return WarpedImage(self, h)


class RasterSphere(SphericalImage):
    """Spherical image backed by a raster and its calibration."""

    def __init__(self, raster: RasterImage):
        self.raster = raster
        d = raster.data
        gu = np.zeros_like(d)
        gv = np.zeros_like(d)
        gu[:, 1:-1] = 0.5 * (d[:, 2:] - d[:, :-2])
        gv[1:-1, :] = 0.5 * (d[2:, :] - d[:-2, :])
        self._gu = gu
        self._gv = gv
        self._valid = self._stencil_valid = None
        if raster.mask is not None:
            m = raster.mask
            st = m.copy()
            st[:, 1:] &= m[:, :-1]
            st[:, :-1] &= m[:, 1:]
            st[1:, :] &= m[:-1, :]
            st[:-1, :] &= m[1:, :]
            self._valid = m.astype(float)
            self._stencil_valid = st.astype(float)

    @staticmethod
    def _covered(flags, uv, ok):
        # a ray is covered when every pixel of its bilinear stencil is flagged
        out = ok.copy()
        if np.any(ok):
            out[ok] = _bilinear(flags, uv[ok, 0], uv[ok, 1]) > 1 - 1e-9
        return out

    def _pixels(self, x):
        x = np.asarray(x, dtype=float)
        uv, ok = ray_to_pixel(self.raster.calib, x, self.raster.shape)
        if self._valid is not None:
            ok = self._covered(self._valid, uv, ok)
        return x, uv, ok

    def in_domain(self, x) -> np.ndarray:
        return self._pixels(x)[2]

    def sample(self, x) -> np.ndarray:
        x, uv, ok = self._pixels(x)
        out = np.zeros(x.shape[:-1])
        if np.any(ok):
            out[ok] = _bilinear(self.raster.data, uv[ok, 0], uv[ok, 1])
        return out

    def gradient_mask(self, x) -> np.ndarray:
        """Rays whose interpolation stencil has valid central differences."""
        x, uv, ok = self._pixels(x)
        h, w = self.raster.shape
        with np.errstate(invalid="ignore"):
            inner = (uv[..., 0] >= 1) & (uv[..., 0] <= w - 2) \
                & (uv[..., 1] >= 1) & (uv[..., 1] <= h - 2)
        ok = ok & inner
        if self._stencil_valid is not None:
            ok = self._covered(self._stencil_valid, uv, ok)
        return ok

    def gradient(self, x) -> np.ndarray:
        """Tangent gradient of the bilinear interpolant.

        Inside a pixel cell this is the exact derivative of the bilinear
        surface, so the gradient is consistent with ``sample``. On cell
        edges the interpolant has a kink and the symmetric derivative is
        used instead, which is the central difference; in particular the
        gradient at pixel centres is the central-difference gradient. The
        pixel-space gradient is pulled back through the differential of the
        pinhole projection and projected onto T_x S^2. Rays within one pixel
        of the grid border get zero.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        out = np.zeros_like(x2)
        mask = self.gradient_mask(x2)
        if np.any(mask):
            xs = x2[mask]
            k = self.raster.calib
            p = xs @ k.T
            uv = p[:, :2] / p[:, 2:3]
            gu, gv = self._pixel_gradient(uv[:, 0], uv[:, 1])
            # d(u, v)/dx for u = (K x)_0 / (K x)_2 and likewise v
            du = (k[0] - uv[:, :1] * k[2]) / p[:, 2:3]
            dv = (k[1] - uv[:, 1:2] * k[2]) / p[:, 2:3]
            g = gu[:, None] * du + gv[:, None] * dv
            out[mask] = tangent_project(xs, g)
        return out[0] if single else out

    def _pixel_gradient(self, u, v):
        d = self.raster.data
        h, w = d.shape
        u0 = np.clip(np.floor(u).astype(np.intp), 0, w - 2)
        v0 = np.clip(np.floor(v).astype(np.intp), 0, h - 2)
        fu = u - u0
        fv = v - v0
        gu = (1 - fv) * (d[v0, u0 + 1] - d[v0, u0]) + fv * (d[v0 + 1, u0 + 1] - d[v0 + 1, u0])
        gv = (1 - fu) * (d[v0 + 1, u0] - d[v0, u0]) + fu * (d[v0 + 1, u0 + 1] - d[v0, u0 + 1])
        # on a cell edge (up to round-off) take the average of both sides
        on_u = (fu < KINK_TOL) | (fu > 1 - KINK_TOL)
        if np.any(on_u):
            uc = u0[on_u] + (fu[on_u] > 0.5)
            vc, t = v0[on_u], fv[on_u]
            gu[on_u] = (1 - t) * self._gu[vc, uc] + t * self._gu[vc + 1, uc]
        on_v = (fv < KINK_TOL) | (fv > 1 - KINK_TOL)
        if np.any(on_v):
            vc = v0[on_v] + (fv[on_v] > 0.5)
            uc, t = u0[on_v], fu[on_v]
            gv[on_v] = (1 - t) * self._gv[vc, uc] + t * self._gv[vc, uc + 1]
        return gu, gv


class WarpedImage(SphericalImage):
    """mu(H, I) = I o rho_{H^{-1}}, evaluated lazily.

    Warping a warped image composes the group elements first, so the source
    raster is interpolated exactly once.
    """

    def __init__(self, source: SphericalImage, h: np.ndarray):
        if isinstance(source, WarpedImage):
            h = source.h @ h
            source = source.source
        self.source = source
        self.h = h
        self._hinv = np.linalg.inv(h)

    def warp(self, h) -> "SphericalImage":
        h = self.h @ np.asarray(h, dtype=float)
        if np.array_equal(h, np.eye(3)):
            return self.source
        return WarpedImage(self.source, h)

    def _pull(self, x):
        # rho(H^{-1}, x) = H x / |H x|
        return act_rho(self._hinv, x)

    def in_domain(self, x) -> np.ndarray:
        return self.source.in_domain(self._pull(x))

    def sample(self, x) -> np.ndarray:
        return self.source.sample(self._pull(x))

    def gradient(self, x) -> np.ndarray:
        # grad mu(H,I)(x) = D rho_{H^{-1}}(x)^T grad I(y),  y = rho_{H^{-1}}(x);
        # D rho_{H^{-1}}(x) = pi_y H / |H x|, and grad I(y) is tangent at y.
        x = np.asarray(x, dtype=float)
        hx = x @ self.h.T
        n = np.linalg.norm(hx, axis=-1, keepdims=True)
        g = self.source.gradient(hx / n)
        return tangent_project(x, (g @ self.h) / n)

    def gradient_mask(self, x) -> np.ndarray:
        return self.source.gradient_mask(self._pull(x))


def as_spherical(image) -> SphericalImage:
    if isinstance(image, SphericalImage):
        return image
    return RasterSphere(image)


def warp(image, h) -> WarpedImage:
    return as_spherical(image).warp(h)


def render(image: SphericalImage, like: RasterImage) -> RasterImage:
    """Sample a spherical image at the pixel rays of ``like``'s grid.

    Pixels outside the image's domain are stored as 0 and flagged invalid
    in the raster's mask.
    """
    h, w = like.shape
    vv, uu = np.mgrid[0:h, 0:w]
    rays = pixel_to_ray(like.calib, np.stack([uu, vv], axis=-1).reshape(-1, 2).astype(float))
    data = np.clip(image.sample(rays).reshape(h, w), 0.0, 1.0)
    return RasterImage(data, like.calib, image.in_domain(rays).reshape(h, w))


@dataclass(frozen=True)
class PixelGrid:
    """Pixel rays and quadrature weights of a raster, in row-major order."""

    pixels: np.ndarray
    rays: np.ndarray
    weights: np.ndarray
    shape: tuple[int, int]
    quadrature: str = "solid_angle"
    # fixed-order (non-BLAS) reductions for bit-reproducible runs
    deterministic: bool = False
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def size(self) -> int:
        return self.rays.shape[0]


def solid_angle_weights(calib, uv) -> np.ndarray:
    """Solid angle per unit pixel area: |det K^{-1}| / |K^{-1} (u, v, 1)|^3."""
    kinv = np.linalg.inv(calib)
    uv = np.asarray(uv, dtype=float)
    hom = np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1) @ kinv.T
    return abs(np.linalg.det(kinv)) / np.linalg.norm(hom, axis=-1) ** 3


def build_pixel_grid(image: RasterImage, quadrature: str = "solid_angle",
                     deterministic: bool = False) -> PixelGrid:
    h, w = image.shape
    vv, uu = np.mgrid[0:h, 0:w]
    uv = np.stack([uu, vv], axis=-1).reshape(-1, 2).astype(float)
    rays = pixel_to_ray(image.calib, uv)
    if quadrature == "solid_angle":
        weights = solid_angle_weights(image.calib, uv)
    elif quadrature == "uniform":
        weights = np.ones(len(uv))
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    for arr in (uv, rays, weights):
        arr.setflags(write=False)
    return PixelGrid(uv, rays, weights, (h, w), quadrature, deterministic)


# -- file I/O ---------------------------------------------------------------

def _read_pgm(raw: bytes) -> np.ndarray:
    if raw[:2] != b"P5":
        raise UnsupportedFormat("not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader("truncated PGM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError as exc:
            raise MalformedHeader(f"bad PGM header field {raw[start:pos]!r}") from exc
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit PGM is supported (maxval {maxval})")
    body = raw[pos:pos + width * height]
    if len(body) != width * height:
        raise MalformedHeader("PGM pixel data is truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def load_image(path, calib=None) -> RasterImage:
    """Read an 8-bit grayscale PGM (P5) or PNG file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"P5":
        pixels = _read_pgm(raw)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image
        import io
        img = Image.open(io.BytesIO(raw))
        if img.mode != "L":
            raise UnsupportedFormat(f"PNG must be 8-bit grayscale, got mode {img.mode}")
        pixels = np.asarray(img, dtype=np.uint8)
    else:
        raise UnsupportedFormat(f"{os.fspath(path)}: not a PGM (P5) or PNG file")
    return RasterImage(pixels.astype(float) / 255.0, calib)


def to_bytes(data) -> np.ndarray:
    return np.round(np.clip(np.asarray(data, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(image, path) -> None:
    """Write a raster (or a 2-D array in [0, 1]) as PGM or PNG by extension."""
    data = image.data if isinstance(image, RasterImage) else image
    pixels = to_bytes(data)
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".pgm":
        h, w = pixels.shape
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(pixels.tobytes())
    elif ext == ".png":
        from PIL import Image
        Image.fromarray(pixels).save(path)
    else:
        raise UnsupportedFormat(f"cannot infer image format from {path!r}")
