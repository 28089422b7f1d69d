import math

import numpy as np
import pytest
from scipy.integrate import quad

from spiralacf import acf
from spiralacf import geometry as G
from spiralacf import harmonic as H
from spiralacf.conformal import ftheta_spec, invert_sc_map


@pytest.fixture(scope="module")
def flat():
    return H.solve_spiral(G.diameter(), 1_000, seed=0)


@pytest.fixture(scope="module")
def stage1():
    return acf.construct_spiral(10, 1, samples=3_000, seed=5)


def preimage_area(spec, r, arcs, n=4000):
    """Area of f^{-1}(B_r ∩ Omega) from Green's theorem on the preimage of the arcs."""
    total = 0.0
    for a, length in arcs:
        phi = a + length * (np.arange(n + 1) / n)
        z = np.array([invert_sc_map(spec, complex(p)) for p in r * np.exp(1j * phi)])
        # closed by the real segment, which adds nothing to x dy - y dx
        total += 0.5 * float(np.sum(z[:-1].real * z[1:].imag - z[1:].real * z[:-1].imag))
    return abs(total)


def test_two_plane_phi_is_constant():
    a, b = 1.7, 0.6
    u1, u2 = acf.PlaneField(a, 0.0, nu=1.0), acf.PlaneField(0.0, b, nu=1.0)
    for r in (0.01, 0.3, 1.0):
        phi, err = acf.compute_phi(u1, u2, r)
        assert phi == pytest.approx(a * a * b * b * math.pi**2 / 4, rel=1e-14) and err == 0


def test_symmetric_pair_phi_is_square():
    u = acf.PlaneField(1.3, 0.0)
    E, _ = acf.dirichlet_energy(u, 0.4)
    phi, _ = acf.compute_phi(u, u, 0.4)
    assert phi == pytest.approx((E / 0.16) ** 2, rel=1e-14)


def test_plane_j_is_one():
    J, err = acf.compute_j(acf.PlaneField(), 0.37)
    assert J == pytest.approx(1.0, abs=1e-15) and err == 0


def test_phi_requires_planar_dimension():
    with pytest.raises(acf.AcfError):
        acf.compute_phi(acf.PlaneField(), acf.PlaneField(), 0.5, n=3)
    with pytest.raises(acf.AcfError):
        acf.dirichlet_energy(acf.PlaneField(), 0.0)


def test_exact_energy_is_preimage_area():
    spec = ftheta_spec(0.3)
    fld = H.ExactField(spec)
    for r in (0.5, 2.0):
        E, err = acf.dirichlet_energy(fld, r)
        area = preimage_area(spec, r, acf._exact_arcs(fld, r))
        assert abs(E - area) < 1e-5 * E


def test_flux_and_grid_agree():
    fld = H.ExactField(ftheta_spec(0.2))
    for r in (0.4, 1.5):
        E1, e1 = acf.dirichlet_energy(fld, r)
        E2, e2 = acf.grid_energy(fld, r)
        assert abs(E1 - E2) <= 3 * math.hypot(e1, e2) + 1e-12 * E1


def test_exact_j_tends_to_one():
    fld = H.ExactField(ftheta_spec(0.2))
    J = [acf.compute_j(fld, r)[0] for r in (1.0, 10.0, 100.0)]
    assert J[0] < J[1] < J[2] < 1.0 + 1e-9
    assert abs(J[2] - 1.0) < abs(J[0] - 1.0)


def test_flat_field_scan(flat):
    scan = acf.acf_scan(flat, flat.radii[:4], samples=2_000)
    assert np.allclose(scan.j, 1.0, atol=1e-10)
    assert np.allclose(scan.phi, math.pi**2 / 4, rtol=1e-10)
    assert np.all(np.abs(scan.j_relation_defect()) < 1e-12)
    assert np.all(scan.monotonicity_margins() >= 0)


def test_scan_radii_are_levels(flat):
    R = acf.scan_radii(flat, 4)
    assert R[0] == 1.0 and np.all(np.isin(R, flat.radii))


def test_extension_identity_and_flat_bound(flat):
    scan = acf.acf_scan(flat, flat.radii[:4], samples=2_000)
    assert acf.extension_bound(scan, 2) is scan
    ext = acf.extension_bound(scan, 3)
    assert ext.dimension == 3
    assert np.allclose(ext.energy, 2 * math.pi / 3, rtol=1e-9)


def test_weighted_bound_matches_quadrature():
    r = 0.8
    g = lambda t: 1.0 + 0.5 * (t > 0.3) + 0.25 * (t > 0.6)
    pieces = [(0.0, 0.3, 1.0), (0.3, 0.6, 1.5), (0.6, 1.0, 1.75)]
    for n in (3, 4, 5):
        k = (n - 4) / 2
        sphere = 2 * math.pi ** ((n - 2) / 2) / math.gamma((n - 2) / 2)
        integrand = lambda t: g(t) * t**3 * (r * r - t * t) ** k
        val = sum(quad(integrand, a, min(b, r), limit=200)[0] for a, b, _ in pieces if a < r)
        assert acf.weighted_energy_bound(pieces, r, n) == pytest.approx(sphere * val / r**n, rel=1e-7)


def test_extension_requires_positive_bound():
    scan = acf.ACFScan((0.5,), (0.0,), (0.0,), (0.0,), (0.0,), (0.0,), (1.0,))
    with pytest.raises(acf.AcfError):
        acf.extension_bound(scan, 3)


def test_product_identity():
    for n0 in (3, 10):
        for K in (1, 10, 1000):
            partial = acf.product_floor(n0, K)
            closed = (n0 * (n0 + K + 1) / ((n0 + 1) * (n0 + K))) ** 2
            assert abs(partial - closed) < 1e-12
        assert acf.product_floor(n0) == pytest.approx((n0 / (n0 + 1)) ** 2, abs=1e-15)
    assert acf.product_floor(10) == pytest.approx(0.826446, abs=1e-6)


def test_flat_core_has_no_deviation(flat):
    assert acf.c1_deviation(flat, 0.1, 1.0) < 1e-12


def test_stage_one_criteria(stage1):
    rec = stage1.records[0]
    assert rec.attempts >= 1
    assert all(c.passed for c in rec.criteria)
    th = 1 / 11
    assert rec.j0[0] > (1 - th * th) ** 2 - 3 * rec.j0[1]
    assert rec.j1[0] <= 1 + th * th + 3 * rec.j1[1]
    assert rec.rho < rec.r < 1


def test_stage_one_scan_monotone(stage1):
    fld = stage1.field
    radii = acf.scan_radii(fld, 6)
    scan = acf.acf_scan(fld, radii, samples=3_000)
    assert np.all(scan.monotonicity_margins() >= 0)
    assert np.all(np.abs(scan.j_relation_defect()) < 1e-12)


def test_scan_radii_fill_between_levels(stage1):
    fld = stage1.field
    n = fld.radii.size + 3
    radii = acf.scan_radii(fld, n)
    assert radii.size == n and np.all(np.diff(radii) < 0)
    off = radii[~np.isin(radii, fld.radii)]
    assert off.size == 3
    # an off-level circle sits between its neighbouring levels in the monotone scan
    r = float(off[0])
    j = int(np.searchsorted(-fld.radii, -r))
    scan = acf.acf_scan(fld, [fld.radii[j - 1], r, fld.radii[j]], samples=3_000)
    assert np.all(scan.monotonicity_margins() >= 0)


def test_tighter_tolerance_gives_smaller_radii(flat):
    sched = acf.AcfSchedule(samples=1_000)
    curve = G.apply_theta_turn(G.diameter(), 1 / 11, 0.3)
    fld = sched.field_for(curve)
    loose = next(sched.candidates(fld, curve, 1 / 12))
    sched.delta_factor = 0.05
    tight = next(sched.candidates(fld, curve, 1 / 12))
    assert tight[0] <= loose[0] and tight[1] <= loose[1]


def test_exhausted_selection_is_a_construction_error():
    with pytest.raises(G.ConstructionError) as info:
        acf.construct_spiral(10, 1, samples=1_000, delta_factor=1e-30)
    assert info.value.stage == 1
