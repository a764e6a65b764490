"""SL(3) group and sl(3) algebra utilities.

Group elements and algebra elements are plain 3x3 ``numpy`` arrays. The
``as_group`` / ``as_algebra`` helpers validate the defining constraints
(unit determinant, zero trace) where a caller wants them checked.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

GROUP_DET_TOL = 1e-9
ALGEBRA_TRACE_TOL = 1e-12
DEGENERATE_DET_TOL = 1e-12


class DegenerateMatrix(ValueError):
    """Raised when a matrix is (numerically) singular."""


class OrientationError(ValueError):
    """Raised when projecting a matrix with negative determinant."""


def _basis() -> np.ndarray:
    e = np.eye(3)
    s2 = 1.0 / np.sqrt(2.0)
    out = np.empty((8, 3, 3))
    out[0] = s2 * (np.outer(e[0], e[0]) - np.outer(e[1], e[1]))
    out[1] = s2 * (np.outer(e[0], e[1]) + np.outer(e[1], e[0]))
    out[2] = s2 * (np.outer(e[0], e[2]) + np.outer(e[2], e[0]))
    out[3] = s2 * (np.outer(e[1], e[2]) + np.outer(e[2], e[1]))
    out[4] = s2 * (np.outer(e[0], e[1]) - np.outer(e[1], e[0]))
    out[5] = s2 * (np.outer(e[0], e[2]) - np.outer(e[2], e[0]))
    out[6] = s2 * (np.outer(e[1], e[2]) - np.outer(e[2], e[1]))
    out[7] = (np.outer(e[0], e[0]) + np.outer(e[1], e[1])
              - 2.0 * np.outer(e[2], e[2])) / np.sqrt(6.0)
    out.setflags(write=False)
    return out


BASIS = _basis()
# Rows are the flattened basis matrices; vee is a matrix-vector product.
_BASIS_FLAT = BASIS.reshape(8, 9)


def basis(j: int) -> np.ndarray:
    """Return the basis matrix B_j of sl(3), 1-based index ``j``."""
    if not 1 <= j <= 8:
        raise IndexError(f"basis index must be in 1..8, got {j}")
    return BASIS[j - 1].copy()


def wedge(v) -> np.ndarray:
    """Map coordinates in R^8 (or a stack ``(..., 8)``) to sl(3)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 8:
        raise ValueError(f"expected trailing dimension 8, got {v.shape}")
    return (v @ _BASIS_FLAT).reshape(v.shape[:-1] + (3, 3))


def vee(a) -> np.ndarray:
    """Coordinates of ``a`` (or a stack ``(..., 3, 3)``) in the B_j basis.

    Non-traceless input is projected orthogonally onto sl(3).
    """
    a = np.asarray(a, dtype=float)
    flat = a.reshape(a.shape[:-2] + (9,))
    return flat @ _BASIS_FLAT.T


def frobenius(a, b) -> float:
    """Trace inner product tr(A^T B)."""
    return float(np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float)))


def sym_skew_split(a) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    sym = 0.5 * (a + a.T)
    return sym, a - sym


def project_sl3(m) -> np.ndarray:
    """Rescale ``m`` by det(m)^(-1/3) so that it lies in SL(3)."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    d = np.linalg.det(m)
    if abs(d) < DEGENERATE_DET_TOL:
        raise DegenerateMatrix(f"determinant {d:.3e} is numerically zero")
    if d < 0:
        raise OrientationError(f"determinant {d:.6g} is negative")
    return m / np.cbrt(d)


def group_exp(a) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    return scipy.linalg.expm(np.asarray(a, dtype=float))


def as_group(m, tol: float = GROUP_DET_TOL) -> np.ndarray:
    """Validate that ``m`` is an element of SL(3) and return it as an array."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    d = np.linalg.det(m)
    if abs(d - 1.0) > tol:
        raise ValueError(f"determinant {d!r} differs from 1 by more than {tol}")
    return m


def as_algebra(a, tol: float = ALGEBRA_TRACE_TOL) -> np.ndarray:
    """Validate that ``a`` is traceless and return it as an array."""
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
    tr = np.trace(a)
    if abs(tr) > tol * max(1.0, np.abs(a).max()):
        raise ValueError(f"trace {tr!r} is not zero")
    return a


def random_group(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """exp of an algebra element with basis coordinates uniform in [-scale, scale]."""
    return group_exp(wedge(rng.uniform(-scale, scale, size=8)))
