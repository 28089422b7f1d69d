import math

import numpy as np
import pytest

from spiralacf import geometry as G
from spiralacf import harmonic as H
from spiralacf import wos
from spiralacf.conformal import ftheta_spec


@pytest.fixture(scope="module")
def omega03():
    return H.solve_omega_theta(0.3, 8.0, samples=20_000, seed=3)


@pytest.fixture(scope="module")
def one_turn():
    curve = G.apply_theta_turn(G.diameter(), 1 / 11, 0.3)
    return H.solve_spiral(curve, 4_000, seed=7)


def interior_points(fld, n, radius, rng):
    pts = []
    while len(pts) < n:
        p = radius * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform())
        if fld.contains(np.array([p]))[0]:
            pts.append(p)
    return np.array(pts)


def test_sine_coefficients_recover_series():
    N = 16
    psi = math.pi * (np.arange(N) + 0.5) / N
    d = np.zeros(N)
    d[[0, 3, 7, N - 1]] = [1.0, -0.25, 0.125, 0.5]
    vals = np.sin(np.outer(psi, np.arange(1, N + 1))) @ d
    assert np.allclose(H.sine_coefficients(vals), d, atol=1e-14)


def test_eval_series_vanishes_off_arc():
    d = np.array([1.0, 0.2])
    assert H.eval_series(d, 0.0, math.pi, [-0.5, 0.0])[0] == 0.0
    assert H.eval_series(d, 0.0, math.pi, [math.pi / 2])[0] == pytest.approx(1.0)


def test_random_stream_is_reproducible():
    a = wos.uniforms(42, 3, 5, 8)
    b = wos.uniforms(42, 3, 5, 8)
    c = wos.uniforms(43, 3, 5, 8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all((a > 0) & (a < 1))


def test_flat_interface_is_exact():
    fld = H.solve_spiral(G.diameter(), 1_000, seed=0)
    rng = np.random.default_rng(0)
    pts = interior_points(fld, 20, 0.99, rng)
    mean, se = H.eval_wos(fld, pts)
    assert np.allclose(mean, pts.imag, atol=1e-12)
    assert np.all(se < 1e-12)
    assert H.j0_proxy(fld)[0] == pytest.approx(1.0, abs=1e-12)


def test_omega_theta_matches_conformal(omega03):
    exact = H.ExactField(ftheta_spec(0.3))
    rng = np.random.default_rng(11)
    pts = interior_points(omega03, 20, 6.0, rng)
    mean, se = H.eval_wos(omega03, pts)
    z = (mean - H.eval_exact(exact, pts)) / se
    assert np.all(np.abs(z) < 4.5)
    assert np.all(se < 2e-2)


def test_estimates_are_deterministic(omega03):
    p = np.array([0.5 + 1.0j])
    assert omega03.value(p)[0][0] == omega03.value(p)[0][0]


def test_outside_phase_is_zero(omega03):
    p = np.array([0.0 - 1.0j])
    mean, se = omega03.value(p)
    assert mean[0] == 0.0 and se[0] == 0.0
    with pytest.raises(H.HarmonicError):
        H.eval_wos(omega03, p)


def test_exact_gradient_matches_difference():
    exact = H.ExactField(ftheta_spec(0.2))
    p = 0.7 + 1.3j
    g, se = H.gradient_at(exact, p, 1e-3)
    fd = H.finite_difference_gradient(exact.value, p, 1e-5)
    assert abs(g[0] - fd) < 1e-7 and se[0] == 0


def test_wos_gradient_matches_exact(omega03):
    exact = H.ExactField(ftheta_spec(0.3))
    pts = np.array([1.0 + 1.5j, -2.0 + 2.0j, 0.3 + 0.8j])
    g, se = H.gradient_at(omega03, pts, 0.2)
    ex = exact.gradient(pts)
    assert np.all(np.abs((g - ex).real) < 4.5 * se.real + 1e-12)
    assert np.all(np.abs((g - ex).imag) < 4.5 * se.imag + 1e-12)


def test_gradient_ball_must_clear_boundary(omega03):
    with pytest.raises(H.HarmonicError):
        H.gradient_at(omega03, np.array([0.05 + 0.05j]), 0.2)


def test_truncated_requires_large_radius():
    with pytest.raises(H.HarmonicError):
        H.solve_truncated(0.2, 3.0, 5.0)


def test_one_turn_floor(one_turn):
    j0, err = H.j0_proxy(one_turn)
    th = 1 / 11
    assert j0 > (1 - th * th) ** 2 - 3 * err
    assert j0 < 1.0


def test_one_turn_levels_are_nested(one_turn):
    R = one_turn.radii
    assert R[0] == 1.0 and np.all(np.diff(R) < 0)
    assert R[-1] < one_turn.curve.core_half_length


def test_symmetric_pair_vanishes_on_interface(one_turn):
    a, b = one_turn.curve.core_segment()
    p = np.array([0.5 * b])
    val, se = H.symmetric_value(one_turn, p)
    assert val[0] == 0.0
    q = np.array([0.2j, -0.2j])
    val, se = H.symmetric_value(one_turn, q)
    assert abs(val[0] - val[1]) < 4.5 * se[0]
    assert np.all(val > 0)
