import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sl3obs import sl3, sphere

vec3 = arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False)).filter(
    lambda v: np.linalg.norm(v) > 0.1)
coords8 = arrays(np.float64, 8, elements=st.floats(-1, 1, allow_nan=False))

H_DIAG = np.diag([2.0, 1.0, 0.5])


def test_act_identity_and_eigenvector():
    x = sphere.normalize([0.3, -0.2, 0.9])
    assert np.allclose(sphere.act_rho(np.eye(3), x), x, atol=1e-15)
    assert np.allclose(sphere.act_rho(H_DIAG, [0, 0, 1.0]), [0, 0, 1.0])


@given(coords8, coords8, vec3)
def test_right_action_compatibility(a, b, x):
    h, g = sl3.group_exp(sl3.wedge(a)), sl3.group_exp(sl3.wedge(b))
    x = sphere.normalize(x)
    lhs = sphere.act_rho(g, sphere.act_rho(h, x))
    assert np.allclose(lhs, sphere.act_rho(h @ g, x), atol=1e-12)


def test_act_rho_vectorised():
    x = sphere.normalize(np.random.default_rng(0).normal(size=(10, 3)))
    h = sl3.random_group(np.random.default_rng(1), 0.5)
    out = sphere.act_rho(h, x)
    assert out.shape == (10, 3)
    assert np.allclose(out[3], sphere.act_rho(h, x[3]))


def test_tangent_project_examples():
    x = sphere.normalize([1.0, 2.0, 3.0])
    assert np.allclose(sphere.tangent_project(x, x), 0.0, atol=1e-15)
    assert np.allclose(sphere.tangent_project([0, 0, 1.0], [1.0, 0, 0]), [1.0, 0, 0])


@given(vec3, vec3)
def test_tangent_project_idempotent(x, v):
    x = sphere.normalize(x)
    p = sphere.tangent_project(x, v)
    assert np.allclose(sphere.tangent_project(x, p), p, atol=1e-14)
    assert abs(np.dot(p, x)) <= 1e-12


def test_check_tangent_raises():
    with pytest.raises(ValueError):
        sphere.check_tangent([0, 0, 1.0], [0, 0.1, 0.1])
    sphere.check_tangent([0, 0, 1.0], [0.3, 0.1, 0.0])


def test_d_rho_identity_examples():
    x = sphere.normalize([0.2, 0.1, 1.0])
    assert np.allclose(sphere.d_rho_identity(x, np.zeros((3, 3))), 0.0)
    assert np.allclose(sphere.d_rho_identity([0, 0, 1.0], sl3.basis(8)), 0.0, atol=1e-16)


@given(coords8, vec3)
def test_d_rho_identity_finite_difference(c, x):
    d = sl3.wedge(c)
    n = np.linalg.norm(d)
    if n > 1:
        d /= n
    x = sphere.normalize(x)
    t = 1e-6
    fd = (sphere.act_rho(sl3.group_exp(t * d), x) - sphere.act_rho(sl3.group_exp(-t * d), x)) / (2 * t)
    assert np.max(np.abs(fd - sphere.d_rho_identity(x, d))) <= 1e-5


def _great_circle(y, v, s):
    n = np.linalg.norm(v)
    return np.cos(s * n) * y + np.sin(s * n) * v / n


@given(coords8, vec3, vec3)
def test_d_rho_finite_difference_and_tangency(c, y, w):
    h = sl3.group_exp(sl3.wedge(c))
    y = sphere.normalize(y)
    v = sphere.tangent_project(y, w)
    if np.linalg.norm(v) < 1e-3:
        return
    s = 1e-6
    fd = (sphere.act_rho(h, _great_circle(y, v, s)) - sphere.act_rho(h, _great_circle(y, v, -s))) / (2 * s)
    out = sphere.apply_d_rho(h, y, v)
    assert np.max(np.abs(fd - out)) <= 1e-5
    assert abs(np.dot(out, sphere.act_rho(h, y))) <= 1e-10


def test_d_rho_identity_map_on_tangents():
    y = sphere.normalize([0.1, -0.3, 1.0])
    v = sphere.tangent_project(y, [1.0, 0.5, 0.0])
    assert np.allclose(sphere.apply_d_rho(np.eye(3), y, v), v)


def test_apply_d_rho_rejects_non_tangent():
    with pytest.raises(ValueError):
        sphere.apply_d_rho(np.eye(3), [0, 0, 1.0], [0, 0, 1.0])


def cross_product_jacobian(h, y):
    v1, v2 = sphere.tangent_basis(y)
    j = sphere.d_rho(h, y)
    return np.linalg.norm(np.cross(j @ v1, j @ v2))


def test_jacobian_examples():
    y = sphere.normalize([0.3, 0.4, 0.8])
    assert np.isclose(sphere.jacobian_det(np.eye(3), y), 1.0, rtol=1e-14)
    # H^{-1} e3 = 2 e3, so the area factor is 1/2^3
    assert np.isclose(sphere.jacobian_det(H_DIAG, [0, 0, 1.0]), 1 / 8, rtol=1e-14)


@given(coords8, vec3)
def test_jacobian_matches_cross_product_and_inverse(c, y):
    h = sl3.group_exp(sl3.wedge(c))
    y = sphere.normalize(y)
    j = sphere.jacobian_det(h, y)
    assert j > 0
    assert abs(j - cross_product_jacobian(h, y)) <= 1e-10 * max(1.0, j)
    back = sphere.jacobian_det(np.linalg.inv(h), sphere.act_rho(h, y))
    assert abs(j * back - 1) <= 1e-10
