"""Right action of SL(3) on the unit sphere and its first-order geometry.

Points are unit 3-vectors; every function accepts either a single point of
shape ``(3,)`` or a stack of shape ``(N, 3)``.
"""

from __future__ import annotations

import numpy as np

TANGENT_TOL = 1e-10


def normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def act_rho(h, x) -> np.ndarray:
    """rho(H, x) = H^{-1} x / |H^{-1} x|."""
    y = np.asarray(x, dtype=float) @ np.linalg.inv(h).T
    return normalize(y)


def projector(x) -> np.ndarray:
    """Tangent projector I - x x^T (stacked for ``(N, 3)`` input)."""
    x = np.asarray(x, dtype=float)
    return np.eye(3) - x[..., :, None] * x[..., None, :]


def tangent_project(x, v) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - x * np.sum(x * v, axis=-1, keepdims=True)


def check_tangent(x, v, tol: float = TANGENT_TOL) -> None:
    dots = np.abs(np.sum(np.asarray(x) * np.asarray(v), axis=-1))
    if np.any(dots > tol * np.maximum(1.0, np.linalg.norm(v, axis=-1))):
        raise ValueError(f"vector is not tangent at its base point "
                         f"(|<v, x>| up to {dots.max():.3e})")


def d_rho_identity(x, d) -> np.ndarray:
    """Velocity of t -> rho(exp(tD), x) at t = 0, i.e. -pi_x D x."""
    x = np.asarray(x, dtype=float)
    return -tangent_project(x, x @ np.asarray(d, dtype=float).T)


def d_rho(h, y) -> np.ndarray:
    """Differential of rho_H at y as a 3x3 matrix acting on T_y S^2.

    Returns ``(1/|H^{-1}y|) pi_{rho_H(y)} H^{-1}``; shape ``(3, 3)`` or
    ``(N, 3, 3)``.
    """
    hinv = np.linalg.inv(h)
    z = np.asarray(y, dtype=float) @ hinv.T
    n = np.linalg.norm(z, axis=-1)
    out = projector(z / n[..., None]) @ hinv
    return out / n[..., None, None]


def apply_d_rho(h, y, v) -> np.ndarray:
    """Push a tangent vector ``v`` at ``y`` forward through rho_H."""
    check_tangent(y, v)
    return np.einsum("...ij,...j->...i", d_rho(h, y), v)


def jacobian_det(h, y) -> np.ndarray:
    """Area distortion of rho_H at y, equal to 1 / (det H |H^{-1} y|^3).

    With A = H^{-1}, the pushed-forward tangent frame spans the normal
    ``A^{-T} y det A``; only its component along rho_H(y), which is
    ``det A / |A y|``, survives the tangent projection, and the two
    projected vectors carry a further factor ``1/|A y|`` each.
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    den = np.linalg.norm(y @ np.linalg.inv(h).T, axis=-1)
    return 1.0 / (abs(np.linalg.det(h)) * den**3)


def tangent_basis(x) -> tuple[np.ndarray, np.ndarray]:
    """An orthonormal frame (v1, v2) of T_x S^2 for a single point x."""
    x = normalize(x)
    helper = np.eye(3)[np.argmin(np.abs(x))]
    v1 = normalize(np.cross(x, helper))
    return v1, np.cross(x, v1)
