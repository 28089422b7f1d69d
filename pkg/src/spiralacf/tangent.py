"""Tangent nonuniqueness: best-fit normals, turning, densities and blow-up fits.

The best-fit normal nu(r) minimises int_{curve ∩ B_r} |x.nu|^2 ds; it is the
eigenvector of the smaller eigenvalue of the second-moment matrix.  Blow-up
fits compare U = u + u~ on B_r with two-plane functions a (x.nu)^+ + b (x.nu)^-.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import geometry, harmonic, polyline
from .quadrature import legendre_01

BLOWUP_ANGLES = 256


class DegenerateNormal(ValueError):
    """The second-moment matrix is a multiple of the identity: nu(r) is undefined."""


def best_fit_normal(curve: geometry.InterfaceCurve, r: float, rel_tol: float = 1e-12):
    """(nu, gap): unit normal as a complex number and lambda_max - lambda_min."""
    M = polyline.second_moment(curve.vertices, r)
    lam, vec = np.linalg.eigh(M)
    if lam[1] <= 0:
        raise DegenerateNormal(f"the curve does not meet B_{r}")
    gap = float(lam[1] - lam[0])
    if gap <= rel_tol * lam[1]:
        raise DegenerateNormal(f"rotationally degenerate second moment at r={r}")
    nu = complex(vec[0, 0], vec[1, 0])
    if nu.imag < 0 or (nu.imag == 0 and nu.real < 0):
        nu = -nu
    return nu, gap


@dataclass(frozen=True)
class BlowupFit:
    radius: float
    alpha: float
    beta: float
    nu: complex
    residual: float
    low_confidence: bool = False


@dataclass
class TangentScan:
    radii: list
    nu: list
    gap: list
    increments: list
    density: list
    stage: list
    flags: list = field(default_factory=list)
    blowups: list = field(default_factory=list)
    g2_terms: list = field(default_factory=list)

    @property
    def total_variation(self) -> float:
        return float(np.sum(self.increments))

    @property
    def g2_sum(self) -> float:
        return float(np.sum(self.g2_terms))

    def stage_sums(self) -> dict:
        """Per-stage partial sums of the turning increments and of the e:g2 terms."""
        out = {}
        for s, inc, g in zip(self.stage[1:], self.increments, self.g2_terms):
            tv, g2 = out.get(s, (0.0, 0.0))
            out[s] = (tv + inc, g2 + g)
        return out

    def angles(self) -> np.ndarray:
        return np.angle(np.asarray(self.nu))

    def csv_rows(self) -> list[tuple]:
        rows = []
        inc = [0.0] + list(self.increments)
        for r, nu, g, d, s, i in zip(self.radii, self.nu, self.gap, self.density, self.stage, inc):
            rows.append((s, r, nu.real, nu.imag, float(np.angle(nu)), g, i, d))
        return rows


def stage_of_radius(curve: geometry.InterfaceCurve, r: float) -> int:
    """Index k of the annulus (inner, outer] containing r: the number of turns felt above r."""
    for k, ann in enumerate(curve.annuli):
        if ann.inner < r <= ann.outer * (1 + 1e-12):
            return k
    for k, ann in enumerate(curve.annuli):
        if r <= ann.outer * (1 + 1e-12) and (k + 1 == len(curve.annuli) or r > curve.annuli[k + 1].outer):
            return k
    return len(curve.annuli) - 1


def turning_profile(curve: geometry.InterfaceCurve, radii: Sequence[float]) -> TangentScan:
    """nu(r) along decreasing radii with signs fixed by continuity, plus turning sums.

    Increments are |Delta arg nu|; the e:g2 terms are r |Delta nu / Delta r|^2 |Delta r|.
    """
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii[:-1], radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    scan = TangentScan([], [], [], [], [], [])
    prev_r, prev_nu = None, None
    for r in radii:
        try:
            nu, gap = best_fit_normal(curve, r)
        except DegenerateNormal:
            scan.flags.append((r, "degenerate"))
            continue
        if prev_nu is not None:
            if (nu * np.conj(prev_nu)).real < 0:
                nu = -nu
            d_angle = abs(float(np.angle(nu * np.conj(prev_nu))))
            dr = prev_r - r
            scan.increments.append(d_angle)
            scan.g2_terms.append(r * (abs(nu - prev_nu) / dr) ** 2 * dr)
        scan.radii.append(r)
        scan.nu.append(nu)
        scan.gap.append(gap)
        scan.density.append(geometry.density_ratio(curve, min(r, 1.0)))
        scan.stage.append(stage_of_radius(curve, r))
        prev_r, prev_nu = r, nu
    return scan


# ---------------------------------------------------------------------------
# blow-up fits


def _two_plane_fit(U: np.ndarray, X: np.ndarray, w: np.ndarray, r: float, n_angles: int):
    """Grid over nu with closed-form least squares for (a, b), then a bounded local
    refinement of the best grid angle.  nu is reported in the upper half plane;
    (nu, a, b) and (-nu, b, a) describe the same two-plane function."""
    total = float(np.sum(w * U * U))

    def fit(t):
        nu = complex(math.cos(t), math.sin(t))
        s = (np.conj(nu) * X).real
        pos, neg = np.maximum(s, 0.0), np.maximum(-s, 0.0)
        app, ann = float(np.sum(w * pos * pos)), float(np.sum(w * neg * neg))
        up, un = float(np.sum(w * U * pos)), float(np.sum(w * U * neg))
        a = up / app if app > 0 else 0.0
        b = un / ann if ann > 0 else 0.0
        return (total - a * up - b * un) / r**4, a, b

    step = 2 * math.pi / n_angles
    grid = (np.arange(n_angles) + 0.5) * step
    res = np.array([fit(t)[0] for t in grid])
    t0 = float(grid[int(np.argmin(res))])
    opt = minimize_scalar(lambda t: fit(t)[0], bounds=(t0 - step, t0 + step), method="bounded",
                          options={"xatol": 1e-10})
    t = float(opt.x) if opt.fun <= res.min() else t0
    val, a, b = fit(t)
    nu = complex(math.cos(t), math.sin(t))
    if nu.imag < 0 or (nu.imag == 0 and nu.real < 0):
        nu, a, b = -nu, b, a
    return BlowupFit(r, a, b, nu, max(val, 0.0))


def _polar_grid(r: float, n_radial: int, n_angles: int):
    s, w = legendre_01(n_radial)
    rho = r * s
    phi = (np.arange(n_angles) + 0.5) * (2 * math.pi / n_angles)
    X = np.multiply.outer(rho, np.exp(1j * phi)).ravel()
    W = np.multiply.outer(w * r * rho, np.full(n_angles, 2 * math.pi / n_angles)).ravel()
    return X, W


def circle_values(fld: harmonic.WosField, rho: float, phi: np.ndarray) -> tuple[np.ndarray, float]:
    """u on |x| = rho from the level series, or the deepest core series below the hierarchy."""
    R = fld.radii
    match = np.flatnonzero(np.abs(R - rho) <= 1e-12 * rho)
    if match.size:
        j = int(match[0])
        vals = harmonic.eval_series(fld.stack.coeffs[j], fld.stack.alpha[j], fld.stack.lam[j], phi)
        return vals, float(np.sqrt((fld.coeff_stderr[j] ** 2).sum() / 2))
    j = fld.stack.known - 1
    if rho > R[j]:
        raise ValueError("rho must be a level radius or lie below the deepest level")
    d, s, Rj = harmonic.core_series(fld, j)
    n = np.arange(1, d.size + 1)
    scaled = d * (rho / Rj) ** n
    vals = harmonic.eval_series(scaled, fld.stack.alpha[j], fld.stack.lam[j], phi)
    return vals, float(np.sqrt(((s * (rho / Rj) ** n) ** 2).sum() / 2))


def _wos_blowup(fld: harmonic.WosField, r: float, n_angles: int, depth: float):
    """Blow-up integrals on the level circles below r.

    G(rho) = (1/rho^2) int U^2 dphi is taken linear in log rho between circles and
    integrated exactly against rho^3 d rho; below the last circle G is constant.
    """
    q = float(fld.radii[1] / fld.radii[0])
    nlev = int(math.ceil(math.log(depth) / math.log(q)))
    rhos = r * q ** np.arange(nlev + 1)
    phi = (np.arange(n_angles) + 0.5) * (2 * math.pi / n_angles)
    e = np.exp(1j * phi)
    X, U, W = [], [], []
    noise = 0.0
    # log-linear interpolation weights for each circle
    weights = np.zeros(rhos.size)
    s = np.log(rhos)
    for i in range(rhos.size - 1):
        a, b = s[i + 1], s[i]
        h = b - a
        # int_a^b e^{4t} (1 - (t - a)/h) dt and int_a^b e^{4t} (t - a)/h dt
        I0 = (math.exp(4 * b) - math.exp(4 * a)) / 4
        I1 = (math.exp(4 * b) * (h / 4 - 1 / 16) + math.exp(4 * a) / 16) / h
        weights[i + 1] += I0 - I1
        weights[i] += I1
    weights[-1] += rhos[-1] ** 4 / 4
    for rho, wt in zip(rhos, weights):
        u1, se1 = circle_values(fld, float(rho), phi)
        u2, _ = circle_values(fld, float(rho), np.mod(phi + math.pi, 2 * math.pi))
        X.append(rho * e)
        U.append(u1 + u2)
        # dA = rho d rho d phi and the integral of G carries 1/rho^2
        W.append(np.full(n_angles, wt / rho**2 * (2 * math.pi / n_angles)))
        noise = max(noise, se1 / rho)
    return np.concatenate(X), np.concatenate(U), np.concatenate(W), noise


def blowup_distance(fld, r: float, n_angles: int = BLOWUP_ANGLES, depth: float = 1e-2,
                    noise_tol: float = 0.3) -> BlowupFit:
    """Best two-plane approximation of U = u + u~ on B_r in the scaled L^2 sense.

    ``fld`` is a spiral ``WosField`` (U built from u(x) + u(-x)) or any object
    whose ``value`` already returns the combined two-phase function.
    """
    if isinstance(fld, harmonic.WosField):
        X, U, W, noise = _wos_blowup(fld, r, n_angles, depth)
        fit = _two_plane_fit(U, X, W, r, n_angles)
        # residual resolution: noise^2 relative to the fitted amplitude
        low = noise**2 > noise_tol * max(fit.residual, 1e-300) and noise > 1e-3
        return BlowupFit(fit.radius, fit.alpha, fit.beta, fit.nu, fit.residual, bool(low))
    X, W = _polar_grid(r, 32, n_angles)
    U = np.asarray(fld.value(X), dtype=float)
    return _two_plane_fit(U, X, W, r, n_angles)


# ---------------------------------------------------------------------------
# certificate


@dataclass
class NonuniquenessReport:
    density_min: float
    density_max: float
    density_c: float
    total_variation: float
    expected_variation: float
    stage_sums: dict
    max_residual: float
    nu_spread: float
    unique_tangent: bool
    witness_gap: float
    witness_stages: int | None
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def stages_to_reach(angle: float, n0: int, limit: int = 10**7) -> int | None:
    """Smallest K with sum_{k<=K} 1/(k+n0) >= angle."""
    total = 0.0
    for k in range(1, limit + 1):
        total += 1.0 / (k + n0)
        if total >= angle:
            return k
    return None


def nonuniqueness_certificate(scan: TangentScan, curve: geometry.InterfaceCurve | None = None,
                              n0: int | None = None, delta: float = 0.05,
                              residual_tol: float = 1e-2, spread_tol: float = 0.2,
                              density_c: float = 0.2) -> NonuniquenessReport:
    """Finite-stage evidence that the blow-up limit depends on the scale.

    (a) both phase densities stay in (c, 1 - c); (b) nu(r) turns by about
    sum theta_k; (c) two-plane fits are good at every scale while their
    normals spread.  The contradiction witness asks for interface points
    within angle ``delta`` of the outer normal; the report gives the angular
    gap still to close and the number of stages the schedule needs.
    """
    dens = np.asarray(scan.density) if scan.density else np.array([0.5])
    thetas = [t.theta for t in curve.turns] if curve is not None else []
    expected = float(sum(thetas))
    resid = [b.residual for b in scan.blowups]
    normals = [b.nu for b in scan.blowups]
    if len(normals) >= 2:
        spread = abs(float(np.angle(normals[-1] * np.conj(normals[0]))))
        spread = min(spread, math.pi - spread)
    else:
        spread = 0.0
    tv = scan.total_variation
    unique = len(thetas) == 0 and tv < 1e-12
    gap = max(0.5 * math.pi - expected - delta, 0.0)
    needed = stages_to_reach(0.5 * math.pi - delta, n0) if n0 is not None else None
    checks = {
        "density": bool(np.all((dens > density_c) & (dens < 1 - density_c))),
        "variation": bool(abs(tv - expected) <= 0.1 * expected) if expected > 0 else tv < 1e-12,
    }
    if scan.blowups:
        checks["residual"] = max(resid) < residual_tol
        checks["spread"] = spread > spread_tol if thetas else True
    return NonuniquenessReport(
        density_min=float(dens.min()), density_max=float(dens.max()),
        density_c=float(min(dens.min(), 1 - dens.max())), total_variation=tv,
        expected_variation=expected, stage_sums=scan.stage_sums(),
        max_residual=float(max(resid)) if resid else 0.0, nu_spread=spread,
        unique_tangent=unique, witness_gap=gap, witness_stages=needed, checks=checks)
