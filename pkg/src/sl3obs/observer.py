"""Photometric cost, correction laws and the discrete-time SL(3) observer.

Conventions: the true homography ``H`` evolves as ``H' = H U``; the current
image is ``I = mu(H, ref)``; the estimate ``H_hat`` is corrected by an
innovation ``Delta`` acting on the left, so the group error
``E = H_hat H^{-1}`` obeys ``E' = Delta E``. Spherical integrals are
weighted sums over the reference pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Union

import numpy as np

from . import sl3
from .image import (PixelGrid, RasterImage, SphericalImage, as_spherical,
                    build_pixel_grid, render)


class SingularHessian(np.linalg.LinAlgError):
    """The cost Hessian at the identity is (numerically) rank deficient."""


@dataclass(frozen=True)
class ScalarGain:
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("gain k must be positive")


@dataclass(frozen=True)
class InverseHessianGain:
    k: float
    # Tikhonov term, as a fraction of the largest Hessian eigenvalue.
    ridge: float = 1e-8

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("gain k must be positive")
        if not self.ridge >= 0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True)
class DualGain:
    k_s: float
    k_a: float

    def __post_init__(self):
        if not (self.k_s > 0 and self.k_a > 0):
            raise ValueError("gains k_s and k_a must be positive")


GainConfig = Union[ScalarGain, InverseHessianGain, DualGain]


def gain_label(gain: GainConfig) -> str:
    if isinstance(gain, ScalarGain):
        return "scalar"
    if isinstance(gain, InverseHessianGain):
        return "inverse_hessian"
    return "dual_gain"


@dataclass
class ObserverState:
    h_hat: np.ndarray
    t: float
    gains: GainConfig


@dataclass
class TruthState:
    h: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class ErrorReport:
    t: float
    eps_h: float
    eps_i: float
    cost: float
    delta_norm: float = float("nan")


# -- reference data ---------------------------------------------------------

@dataclass
class _Reference:
    image: SphericalImage
    values: np.ndarray
    gradients: np.ndarray
    hessian: np.ndarray = None
    eig: tuple = None


def _reference(ref, grid: PixelGrid) -> _Reference:
    ref = as_spherical(ref)
    hit = grid._cache.get(id(ref))
    if hit is not None and hit.image is ref:
        return hit
    data = _Reference(ref, ref.sample(grid.rays), ref.gradient(grid.rays))
    grid._cache[id(ref)] = data
    return data


def warped_error_image(h_hat, image) -> SphericalImage:
    """I^e = mu(H_hat^{-1}, I), i.e. I sampled at rho(H_hat, x)."""
    return as_spherical(image).warp(np.linalg.inv(h_hat))


def _residual(h_hat, image, ref, grid):
    iw = warped_error_image(h_hat, image)
    refd = _reference(ref, grid)
    return iw, iw.sample(grid.rays) - refd.values


def _wsum(grid: PixelGrid, vals) -> float:
    if grid.deterministic:
        return float(np.sum(vals * grid.weights))
    return float(np.dot(vals, grid.weights))


def _outer_sum(grid: PixelGrid, a, b, w) -> np.ndarray:
    """sum_i w_i a_i b_i^T; einsum without BLAS keeps a fixed summation order."""
    if grid.deterministic:
        return np.einsum("n,ni,nj->ij", w, a, b)
    return (a * w[:, None]).T @ b


def photometric_cost(h_hat, image, ref, grid: PixelGrid) -> float:
    """0.5 * sum_i (I^e(x_i) - ref(x_i))^2 w_i over the reference grid."""
    _, r = _residual(h_hat, image, ref, grid)
    return 0.5 * _wsum(grid, r * r)


def correction_integral(h_hat, image, ref, grid: PixelGrid) -> np.ndarray:
    """Unscaled innovation M = sum_i r_i grad I^e(x_i) x_i^T w_i.

    ``<M, D>`` is minus the derivative of the cost along ``exp(tD) H_hat``.
    """
    iw, r = _residual(h_hat, image, ref, grid)
    g = iw.gradient(grid.rays)
    return _outer_sum(grid, g, grid.rays, r * grid.weights)


def correction_scalar(h_hat, image, ref, grid, k) -> np.ndarray:
    return k * correction_integral(h_hat, image, ref, grid)


def cost_hessian(ref, grid: PixelGrid) -> np.ndarray:
    """Gauss-Newton Hessian of the cost at the identity, an 8x8 PSD matrix."""
    refd = _reference(ref, grid)
    if refd.hessian is None:
        v = sl3.vee(refd.gradients[:, :, None] * grid.rays[:, None, :])
        hess = _outer_sum(grid, v, v, grid.weights)
        refd.hessian = 0.5 * (hess + hess.T)
    return refd.hessian


def _hessian_eig(ref, grid):
    refd = _reference(ref, grid)
    if refd.eig is None:
        refd.eig = np.linalg.eigh(cost_hessian(ref, grid))
    return refd.eig


def correction_inverse_hessian(h_hat, image, ref, grid, k, ridge=1e-8) -> np.ndarray:
    lam, vec = _hessian_eig(ref, grid)
    lmax = max(lam[-1], 0.0)
    if ridge == 0 and (lmax == 0 or lam[0] <= 1e-10 * lmax):
        raise SingularHessian(
            f"cost Hessian is singular (eigenvalues {lam[0]:.3e} .. {lmax:.3e})")
    shifted = lam + ridge * lmax
    m = sl3.vee(correction_integral(h_hat, image, ref, grid))
    return sl3.wedge(k * (vec @ ((vec.T @ m) / shifted)))


def correction_dual_gain(h_hat, image, ref, grid, k_s, k_a) -> np.ndarray:
    sym, skew = sl3.sym_skew_split(correction_integral(h_hat, image, ref, grid))
    return k_s * sym + k_a * skew


def correction(gain: GainConfig, h_hat, image, ref, grid) -> np.ndarray:
    if isinstance(gain, ScalarGain):
        return correction_scalar(h_hat, image, ref, grid, gain.k)
    if isinstance(gain, InverseHessianGain):
        return correction_inverse_hessian(h_hat, image, ref, grid, gain.k, gain.ridge)
    if isinstance(gain, DualGain):
        return correction_dual_gain(h_hat, image, ref, grid, gain.k_s, gain.k_a)
    raise TypeError(f"unknown gain configuration {gain!r}")


# -- integration ------------------------------------------------------------

def advance(h_hat, delta, u, dt) -> np.ndarray:
    """H_hat+ = pr(exp(dt Delta) H_hat exp(dt U))."""
    return sl3.project_sl3(sl3.group_exp(dt * delta) @ h_hat @ sl3.group_exp(dt * u))


def step(state: ObserverState, u, image, ref, grid, dt, delta=None) -> ObserverState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if delta is None:
        delta = correction(state.gains, state.h_hat, image, ref, grid)
    return ObserverState(advance(state.h_hat, delta, u, dt), state.t + dt, state.gains)


def propagate_truth(truth: TruthState, dt) -> TruthState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = sl3.project_sl3(truth.h @ sl3.group_exp(dt * truth.velocity))
    return TruthState(h, truth.velocity)


def error_metrics(truth: TruthState, state: ObserverState, image, ref, grid) -> ErrorReport:
    e = state.h_hat @ np.linalg.inv(truth.h)
    _, r = _residual(state.h_hat, image, ref, grid)
    return ErrorReport(
        t=state.t,
        eps_h=float(np.sum((np.eye(3) - e) ** 2)),
        eps_i=float(np.mean(r * r)),
        cost=0.5 * _wsum(grid, r * r),
    )


@dataclass(frozen=True)
class NondegeneracyReport:
    eigenvalues: np.ndarray
    min_ratio: float
    verdict: str
    null_directions: list = field(default_factory=list)


def check_nondegeneracy(ref, grid: PixelGrid, threshold: float = 1e-6) -> NondegeneracyReport:
    """Eigen-analysis of the cost Hessian at the identity.

    Eigenvectors whose eigenvalue falls below ``threshold * lambda_max`` are
    candidate generators of a continuous stabilizer of the reference image.
    """
    lam, vec = _hessian_eig(ref, grid)
    lmax = lam[-1]
    order = np.argsort(lam)[::-1]
    if lmax <= 0:
        return NondegeneracyReport(lam[order], 0.0, "degenerate",
                                   [np.eye(8)[i] for i in range(8)])
    ratio = max(lam[0], 0.0) / lmax
    null = [vec[:, i].copy() for i in range(8) if lam[i] < threshold * lmax]
    verdict = "degenerate" if ratio < threshold else "observable"
    return NondegeneracyReport(lam[order], ratio, verdict, null)


# -- simulation -------------------------------------------------------------

VelocitySchedule = Callable[[float], np.ndarray]


def constant_velocity(u) -> VelocitySchedule:
    u = sl3.as_algebra(u, tol=1e-9)
    return lambda t: u


def piecewise_velocity(segments) -> VelocitySchedule:
    """``segments`` is a list of ``(t_start, U)``; U holds until the next start."""
    segs = sorted((float(t0), sl3.as_algebra(u, tol=1e-9)) for t0, u in segments)
    if not segs:
        raise ValueError("empty velocity schedule")

    def u_at(t):
        cur = segs[0][1]
        for t0, u in segs:
            if t0 <= t + 1e-12:
                cur = u
        return cur

    return u_at


@dataclass
class StepRecord:
    report: ErrorReport
    truth: TruthState
    state: ObserverState
    image: RasterImage


def simulate(ref_raster: RasterImage, h0, velocity, gain: GainConfig, dt: float,
             duration: float, h_hat0=None, quadrature: str = "solid_angle",
             grid: PixelGrid = None, deterministic: bool = False) -> Iterator[StepRecord]:
    """Run truth and observer side by side, yielding one record per step.

    The first record is at t = 0 and the last at the final time, so
    ``round(duration / dt) + 1`` records are produced. The current image at
    each step is ``mu(H, ref)`` rendered onto the reference pixel grid.
    """
    if not dt > 0 or duration < dt:
        raise ValueError("need dt > 0 and duration >= dt")
    if not callable(velocity):
        velocity = constant_velocity(velocity)
    ref = as_spherical(ref_raster)
    if grid is None:
        grid = build_pixel_grid(ref_raster, quadrature, deterministic)
    truth = TruthState(sl3.as_group(h0), velocity(0.0))
    state = ObserverState(sl3.as_group(np.eye(3) if h_hat0 is None else h_hat0), 0.0, gain)
    if isinstance(gain, InverseHessianGain):
        cost_hessian(ref, grid)
    n_steps = int(round(duration / dt))
    for i in range(n_steps + 1):
        t = i * dt
        current = render(ref.warp(truth.h), ref_raster)
        delta = correction(gain, state.h_hat, current, ref, grid)
        rep = error_metrics(truth, state, current, ref, grid)
        rep = ErrorReport(t, rep.eps_h, rep.eps_i, rep.cost, float(np.linalg.norm(delta)))
        yield StepRecord(rep, truth, state, current)
        if i == n_steps:
            break
        u = velocity(t)
        state = ObserverState(advance(state.h_hat, delta, u, dt), (i + 1) * dt, gain)
        truth = propagate_truth(TruthState(truth.h, u), dt)
