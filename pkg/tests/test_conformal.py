import math

import mpmath as mp
import numpy as np
import pytest
from scipy.special import betaincinv

from spiralacf import conformal as C
from spiralacf.config import measured_theta0

THETAS = [0.05, 0.1, 0.2, 0.3]


def beta_median_oracle(theta):
    a = theta / math.pi
    return 2.0 * betaincinv(1 + a, 1 - a, 0.5) - 1.0


def test_zero_angle_derivative_is_one():
    spec = C.ftheta_spec(0.0)
    z = np.array([0.3 + 0.2j, -4 + 1j, 2.5 + 0j])
    assert np.allclose(C.eval_sc_derivative(spec, z), 1.0)


def test_zero_angle_map_is_identity():
    spec = C.ftheta_spec(0.0)
    for x in [-3.0, -0.2, 0.7, 5.0]:
        assert abs(C.eval_sc_map(spec, complex(x)) - x) < 1e-12


@pytest.mark.parametrize("theta", THETAS)
def test_derivative_on_middle_side(theta):
    spec = C.ftheta_spec(theta)
    a = theta / math.pi
    for t in [-0.7, 0.0, 0.2, 0.9]:
        expected = ((1 + t) / (1 - t)) ** a * np.exp(-1j * theta)
        assert abs(C.eval_sc_derivative(spec, complex(t)) - expected) < 1e-13


def test_derivative_far_field_modulus():
    spec = C.ftheta_spec(0.3)
    for z in [1e6j, 1e6 + 0j, -1e6 + 1.0j, 7e5 + 7e5j]:
        oracle = abs(((mp.mpc(z) + 1) / (mp.mpc(z) - 1)) ** mp.mpf(0.3 / math.pi))
        val = abs(C.eval_sc_derivative(spec, z))
        assert abs(val - 1) < 1e-5
        assert abs(val - float(oracle)) < 1e-12


def test_derivative_at_prevertex_raises():
    with pytest.raises(C.ConformalError):
        C.eval_sc_derivative(C.ftheta_spec(0.2), 1.0)


def test_branch_continuity_on_semicircles():
    spec = C.ftheta_spec(0.3)
    for centre, radius in [(0.0, 0.5), (0.0, 2.0), (0.0, 10.0), (1.0, 0.3), (-1.0, 1e-3)]:
        phi = np.linspace(0, math.pi, 20001)
        vals = C.eval_sc_derivative(spec, centre + radius * np.exp(1j * phi))
        jumps = np.abs(np.diff(vals)) / np.abs(vals[1:])
        assert jumps.max() < 1e-3


@pytest.mark.parametrize("theta", THETAS)
def test_map_matches_direct_integration(theta):
    spec = C.ftheta_spec(theta)
    a = mp.mpf(theta) / mp.pi
    fp = lambda s: ((s + 1) / (s - 1)) ** a
    base = complex(C.eval_sc_map(spec, 2j))
    for z in [0.5 + 0.5j, -2 + 0.3j, 3 + 1j, 0.1 + 4j]:
        direct = mp.quad(fp, [2j, z])
        assert abs(C.eval_sc_map(spec, z) - base - complex(direct)) < 1e-10


@pytest.mark.parametrize("theta", THETAS)
def test_image_segment_is_centred(theta):
    spec = C.ftheta_spec(theta)
    w_minus, w_plus = spec.vertices()
    assert abs(w_minus + w_plus) < 1e-12
    assert abs(abs(w_plus - w_minus) - C.slant_length(theta)) < 1e-10
    assert abs(np.angle(w_plus - w_minus) + theta) < 1e-12


@pytest.mark.parametrize("theta", THETAS + [measured_theta0()])
def test_midpoint_preimage_matches_beta_median(theta):
    t = C.find_midpoint_preimage(theta)
    assert abs(t - beta_median_oracle(theta)) < 1e-11
    assert abs(C.eval_sc_map(C.ftheta_spec(theta), complex(t))) < 1e-10


def test_midpoint_preimage_small_theta():
    assert abs(C.find_midpoint_preimage(1e-4)) < 1e-4
    t = C.find_midpoint_preimage(0.1)
    assert 0 < t <= 2 * 0.1 / math.pi


def test_midpoint_residual_at_root():
    t = C.find_midpoint_preimage(0.3)
    res, err = C.midpoint_residual(0.3, t)
    assert abs(res) < 1e-9 and err < 1e-8


def test_theta_above_theta0_rejected():
    with pytest.raises(C.ConformalError):
        C.find_midpoint_preimage(measured_theta0() + 0.05)


def test_gradient_at_origin_bounds():
    assert C.gradient_at_origin(0.05) > 1 - 0.05**2
    th = 0.2
    x = 2 * th / math.pi
    assert C.gradient_at_origin(th) >= ((1 - x) / (1 + x)) ** (th / math.pi)
    assert abs(C.gradient_at_origin(1e-6) - 1) < 1e-10


def test_conformal_consistency():
    spec = C.ftheta_spec(0.3)
    field = C.ConformalField(spec)
    for z in [0.2 + 0.7j, -1.5 + 0.4j, 2 + 2j]:
        w = C.eval_sc_map(spec, z)
        assert abs(C.invert_sc_map(spec, w) - z) < 1e-9
        grad = field.gradient(w)
        assert abs(abs(grad) * abs(C.eval_sc_derivative(spec, z)) - 1) < 1e-9


@pytest.mark.parametrize("layout", ["balanced", "symmetric"])
@pytest.mark.parametrize("theta,m", [(1 / 11, 3.0), (0.3, 4.0)])
def test_parameter_problem(layout, theta, m):
    spec = C.solve_parameter_problem(theta, m, layout=layout)
    assert np.all(np.diff(spec.p) > 0)
    assert np.max(np.abs(C.parameter_residuals(spec))) < 1e-8
    V = spec.vertices()
    assert abs(V[-1] - m) < 1e-8
    assert abs(C.eval_sc_map(spec, complex(spec.p[-1])) - m) < 1e-8
    assert abs(abs(C.eval_sc_derivative(spec, 1e6j)) - 1) < 1e-5


def test_balanced_domain_is_point_symmetric():
    spec = C.solve_parameter_problem(0.2, 3.0)
    V = spec.vertices()
    assert np.allclose(V, -V[::-1], atol=1e-9)
    middle = V[3] - V[2]
    assert abs(np.angle(middle) + 0.2) < 1e-9
    assert abs(V[-2] - (3.0 + 1j * V[3].imag)) < 1e-9
    assert abs(V[-1] - 3.0) < 1e-9


def test_parameter_problem_large_m_recovers_ftheta():
    theta = 0.2
    spec = C.solve_parameter_problem(theta, 400.0)
    base = C.ftheta_spec(theta)
    z = np.array([0.3j, 0.5 + 0.5j, -0.8 + 0.2j, 1.2 + 0.1j, 0.0 + 1j])
    assert np.max(np.abs(C.eval_sc_derivative(spec, z) - C.eval_sc_derivative(base, z))) < 1e-4


def test_parameter_problem_rejects_short_m():
    with pytest.raises(C.ConformalError):
        C.solve_parameter_problem(0.1, 0.5)


def test_spec_text_roundtrip():
    spec = C.solve_parameter_problem(0.2, 3.0)
    again = C.SCMapSpec.from_text(spec.to_text())
    assert again == spec
