"""Acceptance criteria 1-11, one test each; a summary line per criterion is printed at the end."""

import math
import time

import numpy as np
import pytest

from spiralacf import acf, geometry, harmonic, lemmas, tangent
from spiralacf.config import DEFAULT_THETA_GRID, measured_theta0
from spiralacf.conformal import ftheta_spec

N0, STAGES, SEED = 10, 4, 42
SCAN_SAMPLES = 100_000
HIERARCHY_SAMPLES = 10_000
ROUNDING = 1e-12


def record(log, k, passed, detail):
    log[k] = (bool(passed), detail)
    assert passed, detail


@pytest.fixture(scope="module")
def grid():
    th0 = measured_theta0()
    return [t for t in DEFAULT_THETA_GRID if t <= th0 + 1e-12]


@pytest.fixture(scope="module")
def spiral():
    """The 4-stage construction and its 64-circle ACF scan at 1e5 walks per point."""
    t0 = time.perf_counter()
    c = acf.construct_spiral(N0, STAGES, samples=HIERARCHY_SAMPLES, seed=SEED)
    t1 = time.perf_counter()
    radii = acf.scan_radii(c.field, 64)
    scan = acf.acf_scan(c.field, radii, stage=STAGES, samples=SCAN_SAMPLES)
    t2 = time.perf_counter()
    return {"construction": c, "scan": scan, "build_time": t1 - t0, "scan_time": t2 - t1}


@pytest.fixture(scope="module")
def tangent_scan(spiral):
    c = spiral["construction"]
    curve, fld = c.curve, c.field
    tscan = tangent.turning_profile(curve, np.geomspace(1.0, curve.core_half_length * 0.05, 400))
    for r in fld.radii:
        tscan.blowups.append(tangent.blowup_distance(fld, float(r)))
    return tscan


def test_criterion_01_decay(grid, acceptance_log):
    t = time.perf_counter()
    cert = lemmas.verify_decay(grid)
    dt = time.perf_counter() - t
    vals = np.array([r.computed for r in cert.rows])
    bounds = 2 * np.array(grid) / math.pi
    qerr = max(cert.extras["quadrature_error"])
    ok = bool(np.all(vals > 0) and np.all(vals <= bounds) and qerr < 1e-8 and dt < 30)
    record(acceptance_log, 1, ok,
           f"{len(grid)} angles up to theta0={grid[-1]}; min margin {cert.min_margin:.3e}; "
           f"quadrature error {qerr:.1e}; {dt:.1f}s")


def test_criterion_02_theta0(grid, acceptance_log):
    t = time.perf_counter()
    cert = lemmas.verify_theta0(grid)
    ratio = lemmas.limit_ratio(1e-3)
    dt = time.perf_counter() - t
    g = np.array([r.computed for r in cert.rows])
    lower = 1 - np.array(grid) ** 2
    ok = bool(np.all(g > lower) and np.all(g <= 1 + ROUNDING) and abs(ratio - 4) < 1e-2 and dt < 10)
    record(acceptance_log, 2, ok,
           f"min |grad phi(0)| - (1 - theta^2) = {np.min(g - lower):.3e}; max |grad phi(0)| = {g.max():.6f}; "
           f"ratio at 1e-3 = {ratio:.6f}; {dt:.1f}s")


def test_criterion_03_show(grid, acceptance_log):
    cert = lemmas.verify_show_inequality(grid)
    d = lemmas.verify_derivative_at_zero()
    e = np.array([r.computed for r in cert.rows])
    e0 = cert.extras["value_at_zero"]
    target = (1 + math.log(0.5)) / math.pi
    dv = d.rows[0].computed
    ok = bool(np.all(e >= 0) and abs(e0) < 1e-10 and abs(dv - target) < 1e-3)
    record(acceptance_log, 3, ok,
           f"min E = {e.min():.3e}; E(0+) = {e0:.1e}; E'(0+) = {dv:.7f} vs {target:.7f}")


def test_criterion_04_random_lemmas(acceptance_log):
    t = time.perf_counter()
    a = lemmas.randomized_integral_lemma(1000, seed=0)
    b = lemmas.randomized_resource_lemma(1000, seed=1)
    dt = time.perf_counter() - t
    fails = sum(not r.passed for r in a.rows) + sum(not r.passed for r in b.rows)
    ok = len(a.rows) == 1000 and len(b.rows) == 1000 and fails == 0 and dt < 60
    record(acceptance_log, 4, ok, f"2 x 1000 instances, {fails} failures; {dt:.1f}s")


def test_criterion_05_solver(acceptance_log):
    t = time.perf_counter()
    fld = harmonic.solve_omega_theta(0.3, 8.0, samples=100_000, seed=0)
    exact = harmonic.ExactField(ftheta_spec(0.3))
    rng = np.random.default_rng(2024)
    pts = []
    while len(pts) < 100:
        p = 6.0 * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform())
        if fld.contains(np.array([p]))[0]:
            pts.append(p)
    pts = np.array(pts)
    mean, se = harmonic.eval_wos(fld, pts)
    z = np.abs(mean - harmonic.eval_exact(exact, pts)) / se
    dt = time.perf_counter() - t
    ok = bool(np.all(z <= 3) and np.all(se < 1e-2) and dt < 300)
    record(acceptance_log, 5, ok,
           f"100 points, max |z| = {z.max():.2f}, max stderr = {se.max():.1e}; {dt:.0f}s")


def test_criterion_06_truncation(acceptance_log):
    theta, m = 0.3, 3.0
    exact = harmonic.fthetam_field(theta, m)
    rng = np.random.default_rng(7)
    test = []
    while len(test) < 20:
        p = 5.0 * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform())
        if exact.contains(np.array([p]))[0] and abs(p) > 0.2:
            test.append(p)
    test = np.array(test)
    ref = exact.value(test)
    sup, err = [], []
    for R in (4 * m, 8 * m, 16 * m):
        w = harmonic.solve_truncated(theta, m, R, samples=100_000, seed=0)
        mean, se = harmonic.eval_wos(w, test)
        d = np.abs(mean - ref)
        i = int(np.argmax(d))
        sup.append(float(d[i]))
        err.append(float(se[i]))
    ok = all(sup[i + 1] <= sup[i] + 3 * math.hypot(err[i], err[i + 1]) for i in range(2))
    record(acceptance_log, 6, ok,
           "sup |w_R - phi| at R = 4M, 8M, 16M: " + ", ".join(f"{s:.2e}+-{e:.1e}" for s, e in zip(sup, err)))


def test_criterion_07_acf_monotone(spiral, acceptance_log):
    scan = spiral["scan"]
    margins = scan.monotonicity_margins()
    ceiling = acf.product_ceiling(N0, STAGES)
    floor = acf.product_floor(N0, STAGES)
    i1 = int(np.argmax(scan.radii))
    j1, s1 = scan.j[i1], scan.j_stderr[i1]
    runtime = spiral["build_time"] + spiral["scan_time"]
    ok = bool(len(scan.radii) == 64 and np.all(margins >= 0)
              and j1 <= ceiling + 3 * s1 and scan.j0 >= floor - 3 * scan.j0_stderr and runtime < 1800)
    record(acceptance_log, 7, ok,
           f"64 radii in [{min(scan.radii):.1e}, 1], min 3-sigma margin {margins.min():.2e}; "
           f"J(1) = {j1:.5f}+-{s1:.1e} <= {ceiling:.5f}; J(0+) = {scan.j0:.5f}+-{scan.j0_stderr:.1e} "
           f">= {floor:.5f}; {runtime:.0f}s")


def test_criterion_08_limit_floor(spiral, acceptance_log):
    scan = spiral["scan"]
    floor = acf.product_floor(N0)
    partial = acf.product_floor(N0, 10**6)
    j = np.asarray(scan.j)
    s = np.asarray(scan.j_stderr)
    ok = bool(abs(floor - (10 / 11) ** 2) < 1e-15 and abs(partial - floor) < 1e-5
              and np.all(j >= floor - 3 * s))
    record(acceptance_log, 8, ok,
           f"(N0/(N0+1))^2 = {floor:.6f}; partial product (1e6 terms) {partial:.6f}; min J = {j.min():.5f}")


def test_criterion_09_spiral_signature(spiral, tangent_scan, acceptance_log):
    thetas = geometry.theta_schedule(N0, STAGES)
    expected = sum(thetas)
    tv = tangent_scan.total_variation
    fits = tangent_scan.blowups
    worst = max(b.residual for b in fits)
    spread = abs(float(np.angle(fits[-1].nu * np.conj(fits[0].nu))))
    ok = abs(tv - expected) <= 0.1 * expected and worst < 1e-2 and spread > 0.2
    record(acceptance_log, 9, ok,
           f"total variation {tv:.5f} vs sum theta_k = {expected:.5f} (stated 0.3301, off by "
           f"{abs(tv - 0.3301) / 0.3301:.1%}); max blow-up residual {worst:.1e} over {len(fits)} scales; "
           f"normal spread {spread:.3f} rad")


def test_criterion_10_density(spiral, tangent_scan, acceptance_log):
    curve = spiral["construction"].curve
    radii = list(spiral["scan"].radii) + list(tangent_scan.radii)
    plus = np.array([geometry.density_ratio(curve, float(r), geometry.PLUS) for r in radii])
    minus = np.array([geometry.density_ratio(curve, float(r), geometry.MINUS) for r in radii])
    ok = bool(np.all((plus > 0.2) & (plus < 0.8) & (minus > 0.2) & (minus < 0.8)))
    record(acceptance_log, 10, ok,
           f"{len(radii)} radii; plus in [{plus.min():.4f}, {plus.max():.4f}], "
           f"minus in [{minus.min():.4f}, {minus.max():.4f}]")


def test_criterion_11_extension(spiral, acceptance_log):
    ext = acf.extension_bound(spiral["scan"], 3)
    c = float(np.min(ext.phi))
    ok = ext.dimension == 3 and c > 0
    record(acceptance_log, 11, ok, f"n = 3: Phi(r, w, w~) >= {c:.4f} at all {len(ext.radii)} radii")
