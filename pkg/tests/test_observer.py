import numpy as np
import pytest

from sl3obs import observer as ob
from sl3obs import sl3
from sl3obs.image import RasterImage, as_spherical, build_pixel_grid, render, warp
from sl3obs.texture import make_texture

GAINS = [ob.ScalarGain(0.5), ob.InverseHessianGain(0.5), ob.DualGain(0.5, 1.0)]


@pytest.fixture(scope="module")
def texture_setup():
    ref = make_texture(96, 96, seed=3)
    return ref, as_spherical(ref), build_pixel_grid(ref)


def near(rng, scale):
    return sl3.group_exp(sl3.wedge(rng.uniform(-scale, scale, 8)))


def test_gain_validation():
    for bad in (lambda: ob.ScalarGain(0), lambda: ob.InverseHessianGain(-1),
                lambda: ob.InverseHessianGain(1, ridge=-1), lambda: ob.DualGain(1, 0)):
        with pytest.raises(ValueError):
            bad()
    assert [ob.gain_label(g) for g in GAINS] == ["scalar", "inverse_hessian", "dual_gain"]


def test_warped_error_image_identity_and_exact_estimate(texture_setup):
    ref, sph, grid = texture_setup
    assert np.max(np.abs(ob.warped_error_image(np.eye(3), sph).sample(grid.rays)
                         - sph.sample(grid.rays))) <= 1e-12
    h = near(np.random.default_rng(0), 0.03)
    current = render(warp(sph, h), ref)
    iw = ob.warped_error_image(h, current)
    ok = iw.in_domain(grid.rays)
    assert np.mean(np.abs(iw.sample(grid.rays[ok]) - sph.sample(grid.rays[ok]))) <= 2 / 255


def test_cost_zero_and_noise_floor(texture_setup, smooth_setup):
    _, sph, grid = texture_setup
    assert ob.photometric_cost(np.eye(3), sph, sph, grid) == 0.0
    # the smooth image vanishes at the border, so only interpolation error is left
    ref, sph, grid = smooth_setup
    h = near(np.random.default_rng(1), 0.03)
    current = render(warp(sph, h), ref)
    assert ob.photometric_cost(h, current, sph, grid) <= 1e-4 * grid.weights.sum()
    assert ob.photometric_cost(np.eye(3), current, sph, grid) > 1e-4 * grid.weights.sum()


def test_cost_right_invariance(texture_setup):
    _, sph, grid = texture_setup
    rng = np.random.default_rng(2)
    h, hh, q = near(rng, 0.05), near(rng, 0.05), near(rng, 0.05)
    img = warp(sph, h)
    a = ob.photometric_cost(hh, img, sph, grid)
    b = ob.photometric_cost(hh @ q, warp(img, q), sph, grid)
    assert abs(a - b) <= 1e-10 * max(a, 1e-12)


def test_correction_integral_is_cost_gradient(smooth_setup):
    _, sph, grid = smooth_setup
    rng = np.random.default_rng(3)
    h = sl3.random_group(rng, 0.05)
    img = warp(sph, h)
    hh = near(rng, 0.03) @ h
    m = ob.correction_integral(hh, img, sph, grid)
    eps = 1e-4
    fd = np.array([-(ob.photometric_cost(sl3.group_exp(eps * b) @ hh, img, sph, grid)
                     - ob.photometric_cost(sl3.group_exp(-eps * b) @ hh, img, sph, grid)) / (2 * eps)
                   for b in sl3.BASIS])
    proj = sl3.vee(m)
    assert np.max(np.abs(proj - fd) / np.abs(fd)) <= 0.01


def test_corrections_traceless_and_vanish_at_truth(texture_setup):
    ref, sph, grid = texture_setup
    rng = np.random.default_rng(4)
    h = near(rng, 0.05)
    img = warp(sph, h)
    hh = near(rng, 0.03) @ h
    for g in GAINS:
        d = ob.correction(g, hh, img, sph, grid)
        assert abs(np.trace(d)) <= 1e-10 * np.linalg.norm(d)
        assert np.linalg.norm(ob.correction(g, h, img, sph, grid)) <= 1e-10 * np.linalg.norm(d)
    current = render(img, ref)
    d = ob.correction_scalar(h, current, sph, grid, 1.0)
    assert np.linalg.norm(d) <= 1e-3 * grid.weights.sum()


def test_dual_gain_equal_gains_is_scalar(texture_setup):
    _, sph, grid = texture_setup
    rng = np.random.default_rng(5)
    img = warp(sph, near(rng, 0.05))
    hh = near(rng, 0.05)
    a = ob.correction_dual_gain(hh, img, sph, grid, 0.7, 0.7)
    b = ob.correction_scalar(hh, img, sph, grid, 0.7)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.abs(b).max()


def test_hessian_symmetric_psd_and_second_difference(smooth_setup):
    _, sph, grid = smooth_setup
    hess = ob.cost_hessian(sph, grid)
    lam = np.linalg.eigvalsh(hess)
    assert np.array_equal(hess, hess.T)
    assert lam[0] >= -1e-12 * lam[-1]
    eps = 1e-4
    for j, b in enumerate(sl3.BASIS):
        c2 = (ob.photometric_cost(sl3.group_exp(eps * b), sph, sph, grid)
              + ob.photometric_cost(sl3.group_exp(-eps * b), sph, sph, grid)) / eps**2
        assert abs(c2 - hess[j, j]) <= 0.05 * hess[j, j]


def test_inverse_hessian_recovers_small_error(texture_setup):
    # Gauss-Newton: one full step from a small error removes most of it
    _, sph, grid = texture_setup
    xi = np.random.default_rng(6).uniform(-0.005, 0.005, 8)
    hh = sl3.group_exp(sl3.wedge(xi))
    d = ob.correction_inverse_hessian(hh, sph, sph, grid, 1.0)
    assert np.linalg.norm(sl3.vee(d) + xi) <= 0.2 * np.linalg.norm(xi)


def test_inverse_hessian_singular_without_ridge():
    flat = RasterImage(np.full((32, 32), 0.5))
    sph = as_spherical(flat)
    grid = build_pixel_grid(flat)
    with pytest.raises(ob.SingularHessian):
        ob.correction_inverse_hessian(np.eye(3), sph, sph, grid, 1.0, ridge=0.0)
    with pytest.raises(np.linalg.LinAlgError):
        ob.correction_inverse_hessian(np.eye(3), sph, sph, grid, 1.0, ridge=0.0)


def test_check_nondegeneracy_constant_and_texture(texture_setup):
    flat = RasterImage(np.full((32, 32), 0.5))
    rep = ob.check_nondegeneracy(as_spherical(flat), build_pixel_grid(flat))
    assert rep.verdict == "degenerate" and len(rep.null_directions) == 8
    assert np.all(rep.eigenvalues == 0)
    _, sph, grid = texture_setup
    rep = ob.check_nondegeneracy(sph, grid)
    assert rep.verdict == "observable" and rep.min_ratio > 1e-3
    assert np.all(np.diff(rep.eigenvalues) <= 0)


def test_advance_and_truth_keep_unit_determinant():
    rng = np.random.default_rng(7)
    h = sl3.random_group(rng, 0.3)
    for _ in range(50):
        h = ob.advance(h, sl3.wedge(rng.normal(size=8)), sl3.wedge(rng.normal(size=8)), 0.01)
        assert abs(np.linalg.det(h) - 1) <= 1e-12
    t = ob.propagate_truth(ob.TruthState(h, sl3.basis(3)), 0.1)
    assert abs(np.linalg.det(t.h) - 1) <= 1e-12
    with pytest.raises(ValueError):
        ob.propagate_truth(t, 0.0)


def test_step_matches_advance(texture_setup):
    _, sph, grid = texture_setup
    state = ob.ObserverState(np.eye(3), 0.0, ob.ScalarGain(1.0))
    img = warp(sph, near(np.random.default_rng(8), 0.02))
    nxt = ob.step(state, sl3.basis(1), img, sph, grid, 0.01)
    d = ob.correction_scalar(np.eye(3), img, sph, grid, 1.0)
    assert np.allclose(nxt.h_hat, ob.advance(np.eye(3), d, sl3.basis(1), 0.01), atol=1e-15)
    assert nxt.t == pytest.approx(0.01)


def test_error_metrics_uniform_relation(texture_setup):
    ref, sph, _ = texture_setup
    grid = build_pixel_grid(ref, "uniform")
    h = near(np.random.default_rng(9), 0.03)
    rep = ob.error_metrics(ob.TruthState(h, np.zeros((3, 3))),
                           ob.ObserverState(np.eye(3), 0.0, GAINS[0]), render(warp(sph, h), ref), sph, grid)
    assert rep.eps_i == pytest.approx(2 * rep.cost / grid.size, rel=1e-12)
    assert rep.eps_h == pytest.approx(np.sum((np.eye(3) - np.linalg.inv(h)) ** 2), rel=1e-12)


def test_simulate_converged_stays_converged(texture_setup):
    ref, _, _ = texture_setup
    recs = list(ob.simulate(ref, np.eye(3), np.zeros((3, 3)), ob.ScalarGain(1.0), 0.05, 0.5))
    assert len(recs) == 11
    assert all(r.report.eps_h <= 1e-12 for r in recs)


def test_simulate_converges_with_moderate_gain(texture_setup):
    ref, _, grid = texture_setup
    h0 = near(np.random.default_rng(10), 0.02)
    u = sl3.wedge([0, 0, 0.05, -0.05, 0, 0, 0, 0])
    for g, target in ((ob.ScalarGain(8.0), 0.5), (ob.InverseHessianGain(2.0), 0.01),
                      (ob.DualGain(5.0, 10.0), 0.5)):
        recs = list(ob.simulate(ref, h0, u, g, 0.02, 2.0, grid=grid))
        assert recs[-1].report.eps_h < target * recs[0].report.eps_h
        assert all(abs(np.linalg.det(r.state.h_hat) - 1) <= 1e-12 for r in recs)


def test_piecewise_velocity():
    a, b = sl3.basis(1), sl3.basis(2)
    f = ob.piecewise_velocity([(1.0, b), (0.0, a)])
    assert np.array_equal(f(0.5), a) and np.array_equal(f(1.0), b) and np.array_equal(f(5), b)
    with pytest.raises(ValueError):
        ob.piecewise_velocity([])
