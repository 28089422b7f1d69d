"""ACF functional, one-phase J, radius selection and the n > 2 extension.

For a pair u, u~(z) = u(-z) in the plane the ACF functional is
Phi(r) = (E(r) / r^2)^2 with E(r) = int_{B_r} |grad u|^2, and
J(r) = (2 E(r) / (pi r^2))^{1/2}, so J^2 = (2/pi) sqrt(Phi).

Energies are computed from the boundary flux E(r) = int u d_r u over the
positive arc of |x| = r, which is valid because u vanishes on the interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gamma

from . import geometry, harmonic, polyline
from .config import DEFAULT_M, LEVEL_RATIO
from .conformal import boundary_polyline, eval_sc_derivative, in_image, invert_sc_map
from .quadrature import legendre_01

SCAN_NODES = 16


class AcfError(ValueError):
    pass


# ---------------------------------------------------------------------------
# analytic reference fields


@dataclass(frozen=True)
class PlaneField:
    """alpha (x.nu)^+ + beta (x.nu)^-: a two-plane function; ``beta = 0`` gives one phase."""

    alpha: float = 1.0
    beta: float = 0.0
    nu: complex = 1j
    kind: str = "analytic"

    def value(self, p):
        t = (np.conj(self.nu) * np.atleast_1d(np.asarray(p, dtype=complex))).real
        return self.alpha * np.maximum(t, 0.0) + self.beta * np.maximum(-t, 0.0)

    def energy(self, r: float) -> float:
        return 0.5 * math.pi * r * r * (self.alpha**2 + self.beta**2)


# ---------------------------------------------------------------------------
# energies


def _exact_arcs(fld: harmonic.ExactField, r: float) -> list[tuple[float, float]]:
    spec = fld.spec
    R = 4.0 * max(np.max(np.abs(spec.vertices())), r) + 1.0
    bnd = boundary_polyline(spec, R)
    cross = polyline.circle_crossings(bnd, r)
    if cross.size == 0:
        return [(0.0, 2 * math.pi)] if in_image(spec, r + 0j)[0] else []
    arcs = []
    for i, a in enumerate(cross):
        b = cross[(i + 1) % cross.size]
        length = (b - a) % (2 * math.pi)
        mid = r * np.exp(1j * (a + 0.5 * length))
        if in_image(spec, mid)[0]:
            arcs.append((float(a), float(length)))
    return arcs


def _exact_flux(fld: harmonic.ExactField, r: float, n: int) -> float:
    s, w = legendre_01(n)
    total = 0.0
    for a, length in _exact_arcs(fld, r):
        phi = a + length * s
        pts = r * np.exp(1j * phi)
        vals, grads = [], []
        for p in pts:
            z = invert_sc_map(fld.spec, complex(p))
            Fp = 1.0 / eval_sc_derivative(fld.spec, z)
            vals.append(max(z.imag, 0.0))
            grads.append(complex(Fp.imag, Fp.real))
        dr = (np.conj(np.exp(1j * phi)) * np.array(grads)).real
        total += length * r * float(np.dot(w, np.array(vals) * dr))
    return total


def grid_energy(fld, r: float, n_radial: int = 48, n_angular: int = 48) -> tuple[float, float]:
    """int_{B_r} |grad u|^2 by polar Gauss quadrature of the exact gradient.

    An independent check on the flux energy for conformal fields: each
    quadrature circle is split at its crossings with the boundary.
    """
    if isinstance(fld, PlaneField):
        return fld.energy(r), 0.0
    if not isinstance(fld, harmonic.ExactField):
        raise AcfError("grid energies need an exact gradient")

    def run(nr, na):
        s, w = legendre_01(nr)
        sa, wa = legendre_01(na)
        total = 0.0
        for rho, wr in zip(r * s, r * w):
            for a, length in _exact_arcs(fld, float(rho)):
                pts = rho * np.exp(1j * (a + length * sa))
                g = fld.gradient(pts)
                total += wr * rho * length * float(np.dot(wa, np.abs(g) ** 2))
        return total

    e1 = run(n_radial // 2, n_angular // 2)
    e2 = run(n_radial, n_angular)
    return e2, abs(e2 - e1)


def dirichlet_energy(fld, r: float, *, nodes: int = SCAN_NODES, samples: int | None = None):
    """(int_{B_r} |grad u|^2, error estimate) via the boundary flux."""
    if not (r > 0):
        raise AcfError("radius must be positive")
    if isinstance(fld, PlaneField):
        return fld.energy(r), 0.0
    if isinstance(fld, harmonic.ExactField):
        e1 = _exact_flux(fld, r, 48)
        e2 = _exact_flux(fld, r, 96)
        return e2, abs(e2 - e1)
    if isinstance(fld, harmonic.WosField):
        return _wos_energy(fld, r, nodes, samples)
    raise AcfError(f"unsupported field {type(fld).__name__}")


def _wos_energy(fld: harmonic.WosField, r: float, nodes: int, samples: int | None):
    curve = fld.curve
    if curve is None:
        raise AcfError("flux energies need a spiral field")
    R = fld.radii
    match = np.flatnonzero(np.abs(R - r) <= 1e-12 * r)
    alpha, lam = geometry.positive_arc(curve, r)
    phi = harmonic.midpoint_angles(alpha, lam, nodes)
    pts = r * np.exp(1j * phi)
    if match.size:
        j = int(match[0])
        u = harmonic.eval_series(fld.stack.coeffs[j], fld.stack.alpha[j], fld.stack.lam[j], phi)
        useries = np.sqrt((fld.coeff_stderr[j] ** 2).sum() / 2.0)
        u_se = np.full(nodes, useries)
        rel = fld.mode1_rel[j]
    else:
        u, u_se = fld.value(pts, samples, stream=5)
        j = int(np.searchsorted(-R, -r) - 1)
        rel = fld.mode1_rel[max(j, 0)]
    dist = polyline.distance(curve.vertices, pts)
    ball = np.minimum(0.5 * dist, 0.25 * r)
    g, gse = fld.gradient(pts, ball, samples)
    radial = np.exp(1j * phi)
    dr = (np.conj(radial) * g).real
    dr_se = np.hypot(np.abs(radial.real) * gse.real, np.abs(radial.imag) * gse.imag)
    w = r * lam / nodes
    energy = w * float(np.sum(u * dr))
    noise = w * math.sqrt(float(np.sum((u * dr_se) ** 2 + (dr * u_se) ** 2)))
    err = math.hypot(noise, 2.0 * rel * abs(energy))
    return energy, err


def compute_j(fld, r: float, **kw) -> tuple[float, float]:
    """J(r, u) = (2 E(r) / (pi r^2))^{1/2} and its standard error."""
    E, err = dirichlet_energy(fld, r, **kw)
    J = math.sqrt(max(2.0 * E / (math.pi * r * r), 0.0))
    return J, (J * err / (2.0 * E) if E > 0 else math.inf)


def weighted_energy_bound(E_lower, r: float, n: int) -> float:
    """Lower bound of (1/r^n) int_{B_r^n} |grad w|^2 for w(x) = u(x1, x2).

    ``E_lower(t)`` must return a lower bound of E(t)/t^2 that is constant on
    pieces; it is given as a list of (t_lo, t_hi, value) covering (0, r].
    """
    if n == 2:
        raise AcfError("use the planar energy directly when n = 2")
    k = (n - 4) / 2.0
    sphere = 2.0 * math.pi ** ((n - 2) / 2.0) / gamma((n - 2) / 2.0)

    def prim(t):
        s = r * r - t * t
        return -0.5 * (r * r * s ** (k + 1) / (k + 1) - s ** (k + 2) / (k + 2))

    total = 0.0
    for lo, hi, val in E_lower:
        lo, hi = max(lo, 0.0), min(hi, r)
        if hi > lo:
            total += val * (prim(hi) - prim(lo))
    return sphere * total / r**n


def compute_phi(fld1, fld2, r: float, n: int = 2, **kw) -> tuple[float, float]:
    """Phi(r) = (1/r^4) E_1(r) E_2(r) in the plane (the weight |x|^{n-2} is 1)."""
    if n != 2:
        raise AcfError("for n > 2 use extension_bound on a planar scan")
    E1, e1 = dirichlet_energy(fld1, r, **kw)
    if fld2 is fld1:
        E2, e2 = E1, e1
        phi = E1 * E2 / r**4
        return phi, 2.0 * E1 * e1 / r**4
    E2, e2 = dirichlet_energy(fld2, r, **kw)
    phi = E1 * E2 / r**4
    return phi, math.hypot(E2 * e1, E1 * e2) / r**4


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class ACFScan:
    radii: tuple[float, ...]
    phi: tuple[float, ...]
    j: tuple[float, ...]
    stderr: tuple[float, ...]
    j_stderr: tuple[float, ...]
    energy: tuple[float, ...]
    energy_stderr: tuple[float, ...]
    dimension: int = 2
    stage: int = 0
    j0: float = math.nan
    j0_stderr: float = 0.0

    def monotonicity_margins(self) -> np.ndarray:
        """Phi(r_hi) - Phi(r_lo) + 3 sigma for adjacent radii (positive = consistent).

        A relative allowance of 1e-12 absorbs floating-point rounding of exact fields."""
        order = np.argsort(self.radii)
        p = np.asarray(self.phi)[order]
        s = np.asarray(self.stderr)[order]
        return p[1:] - p[:-1] + 3.0 * np.hypot(s[1:], s[:-1]) + 1e-12 * np.maximum(p[1:], p[:-1])

    def j_relation_defect(self) -> np.ndarray:
        """J^2 - (2/pi) sqrt(Phi) at every radius."""
        return np.asarray(self.j) ** 2 - (2.0 / math.pi) * np.sqrt(np.asarray(self.phi))

    def csv_rows(self) -> list[tuple]:
        return [(self.stage, r, p, j, s, self.dimension)
                for r, p, j, s in zip(self.radii, self.phi, self.j, self.stderr)]


def scan_radii(fld: harmonic.WosField, count: int = 64) -> np.ndarray:
    """``count`` log-spaced radii from 1 down to the deepest level, in decreasing order.

    Level circles are used while there are enough of them. Beyond that, circles
    at R_j q^{1/4} are added, spread evenly over the hierarchy; these avoid the
    half-level radii where turns sit and must meet the interface exactly twice.
    """
    R = fld.radii
    if count <= R.size:
        idx = np.unique(np.round(np.linspace(0, R.size - 1, count)).astype(int))
        return R[idx]
    step = R[1] / R[0] if R.size > 1 else 10.0 ** (-1.0 / 6.0)
    between = R[:-1] * step**0.25
    if fld.curve is not None:
        verts = fld.curve.vertices
        between = np.array([t for t in between if polyline.circle_crossings(verts, float(t)).size == 2])
    extra = count - R.size
    if extra > between.size:
        raise AcfError(f"only {R.size + between.size} scan circles available, {count} requested")
    pick = between[np.unique(np.round(np.linspace(0, between.size - 1, extra)).astype(int))]
    return np.sort(np.concatenate([R, pick]))[::-1]


def acf_scan(fld, radii: Sequence[float], stage: int = 0, **kw) -> ACFScan:
    E, Es = [], []
    for r in radii:
        e, s = dirichlet_energy(fld, float(r), **kw)
        E.append(e)
        Es.append(s)
    E, Es, R = np.array(E), np.array(Es), np.asarray(radii, dtype=float)
    scaled = E / R**2
    phi = scaled**2
    phi_se = 2.0 * scaled * Es / R**2
    J = np.sqrt(np.maximum(2.0 * scaled / math.pi, 0.0))
    J_se = np.where(E > 0, J * Es / (2.0 * np.maximum(E, 1e-300)), np.inf)
    j0, j0_se = (harmonic.j0_proxy(fld) if isinstance(fld, harmonic.WosField) and fld.curve is not None
                 else (math.nan, 0.0))
    return ACFScan(tuple(R), tuple(phi), tuple(J), tuple(phi_se), tuple(J_se), tuple(E), tuple(Es),
                   2, stage, float(j0), float(j0_se))


def extension_bound(scan2d: ACFScan, n: int) -> ACFScan:
    """Certified lower bounds of Phi(r, w, w~) for w(x) = u(x1, x2) in R^n.

    Uses (1/r^2) int |grad w|^2 / |x|^{n-2} >= (1/r^n) int_{B_r} |grad w|^2 and
    the monotone lower envelope of E(t)/t^2 from the planar scan: for t at or
    above a scanned radius r_i, E(t)/t^2 >= E(r_i)/r_i^2 - 3 sigma; below the
    scan, E(t)/t^2 >= (pi/2) (J(0+) - 3 sigma)^2.
    """
    if n == 2:
        return scan2d
    if n < 2:
        raise AcfError("dimension must be at least 2")
    R = np.asarray(scan2d.radii)
    order = np.argsort(R)
    R = R[order]
    low = (np.asarray(scan2d.energy)[order] - 3 * np.asarray(scan2d.energy_stderr)[order]) / R**2
    low = np.maximum.accumulate(low)
    if math.isnan(scan2d.j0):
        floor = float(low[0])
    else:
        floor = 0.5 * math.pi * max(scan2d.j0 - 3 * scan2d.j0_stderr, 0.0) ** 2
        low = np.maximum(low, floor)
    if floor <= 0 and low[0] <= 0:
        raise AcfError("the planar scan has no positive lower bound")
    pieces = [(0.0, float(R[0]), floor)]
    for i in range(R.size):
        hi = float(R[i + 1]) if i + 1 < R.size else math.inf
        pieces.append((float(R[i]), hi, float(low[i])))
    bounds = np.array([weighted_energy_bound(pieces, float(r), n) for r in scan2d.radii])
    phi = bounds**2
    return ACFScan(scan2d.radii, tuple(phi), tuple([math.nan] * len(phi)), tuple([0.0] * len(phi)),
                   tuple([0.0] * len(phi)), tuple(bounds), tuple([0.0] * len(phi)), n, scan2d.stage,
                   scan2d.j0, scan2d.j0_stderr)


def product_floor(n0: int, stages: int | None = None) -> float:
    """prod_k (1 - theta_k^2)^2 with theta_k = 1/(k + n0); infinite product = (n0/(n0+1))^2."""
    if stages is None:
        return (n0 / (n0 + 1.0)) ** 2
    return float(np.prod([(1 - 1.0 / (k + n0) ** 2) ** 2 for k in range(1, stages + 1)]))


def product_ceiling(n0: int, stages: int) -> float:
    return float(np.prod([1 + 1.0 / (k + n0) ** 2 for k in range(1, stages + 1)]))


# ---------------------------------------------------------------------------
# radius selection


def c1_deviation(fld: harmonic.WosField, r: float, core_radius: float, q: float = LEVEL_RATIO) -> float:
    """Upper bound (3 sigma) of || u(r x)/r - J(0+) y^+ ||_{C^1} on the positive half circle.

    Uses the deepest level inside the flat core with radius >= r/q^2, where
    u = sum d_n (rho/R)^n sin(n psi) exactly.
    """
    R = fld.radii
    ok = np.flatnonzero((R <= core_radius * (1 + 1e-12)) & (R >= r / q**2 * (1 - 1e-12)))
    if ok.size == 0:
        return math.inf
    j = int(ok[-1])
    d, s, Rj = harmonic.core_series(fld, j)
    n = np.arange(1, d.size + 1)
    terms = (np.abs(d) + 3 * s) / Rj * (r / Rj) ** (n - 1) * (1 + n)
    return float(terms[1:].sum())


def level_sup(fld: harmonic.WosField, j: int, grid: int = 512) -> tuple[float, float]:
    """sup of u on level circle j (and a 3 sigma allowance)."""
    alpha, lam = fld.stack.alpha[j], fld.stack.lam[j]
    phi = alpha + lam * np.linspace(0, 1, grid)
    vals = harmonic.eval_series(fld.stack.coeffs[j], alpha, lam, phi)
    return float(vals.max()), float(3 * np.sqrt((fld.coeff_stderr[j] ** 2).sum()))


def sup_on_circle(fld: harmonic.WosField, r: float, grid: int = 512) -> tuple[float, float]:
    """sup of u on |x| = r: from the level itself, or from the series of the
    smallest enclosing level when the circle lies below the hierarchy's last level
    but inside its flat core."""
    R = fld.radii
    match = np.flatnonzero(np.abs(R - r) <= 1e-12 * r)
    if match.size:
        return level_sup(fld, int(match[0]), grid)
    j = int(np.flatnonzero(R >= r)[-1])
    d, s, Rj = harmonic.core_series(fld, j)
    psi = np.linspace(0, math.pi, grid)
    n = np.arange(1, d.size + 1)
    scale = (r / Rj) ** n
    vals = np.sin(np.outer(psi, n)) @ (d * scale)
    return float(vals.max()), float(3 * np.sqrt(((s * scale) ** 2).sum()))


@dataclass
class Criterion:
    name: str
    value: float
    bound: float
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= 0


@dataclass
class StageRecord:
    stage: int
    theta: float
    r: float
    rho: float
    attempts: int
    criteria: list = field(default_factory=list)
    j1: tuple = (math.nan, 0.0)
    j0: tuple = (math.nan, 0.0)
    c1_deviation: float = math.nan
    delta: float = math.nan


@dataclass
class Construction:
    curve: geometry.InterfaceCurve
    field: harmonic.WosField
    records: list
    fields: list

    @property
    def thetas(self) -> list[float]:
        return [t.theta for t in self.curve.turns]


def _j_at_one(fld, samples):
    E, err = dirichlet_energy(fld, 1.0, samples=samples)
    J = math.sqrt(2 * E / math.pi)
    return J, J * err / (2 * E)


@dataclass
class AcfSchedule:
    """Radius selection coupled to the field: the C^1 closeness trigger picks r, and rho
    sits just below r with rho/2 between level radii."""

    samples: int = 10_000
    seed: int = 0
    q: float = LEVEL_RATIO
    delta_factor: float = 0.5
    skip: int = 0
    _cache: dict = field(default_factory=dict)

    def field_for(self, curve: geometry.InterfaceCurve) -> harmonic.WosField:
        key = curve.vertices.tobytes()
        if key not in self._cache:
            self._cache[key] = harmonic.solve_spiral(curve, self.samples, self.seed, q=self.q)
        return self._cache[key]

    def candidates(self, fld: harmonic.WosField, curve: geometry.InterfaceCurve, theta: float):
        """Level radii r (largest first) that pass the C^1 trigger and hypothesis (2)."""
        delta = self.delta_factor * theta**2
        ell = curve.core_half_length
        J1 = 1.0 if not curve.turns else _j_at_one(fld, fld.samples)[0]
        i = int(math.ceil(math.log(ell) / math.log(self.q))) + 2
        while True:
            r = self.q**i
            dev = c1_deviation(fld, r, ell, self.q)
            if dev < delta:
                sup, allow = sup_on_circle(fld, r)
                if sup + allow < 2 * J1 * r:
                    yield r, 2.0 * self.q ** (i + 2.5), dev, delta
            i += 1
            if self.q**i < fld.radii[-1] * 1e-6:
                return

    def select(self, stage: int, curve: geometry.InterfaceCurve, theta: float) -> tuple[float, float]:
        fld = self.field_for(curve)
        gen = self.candidates(fld, curve, theta)
        for _ in range(self.skip + 1):
            r, rho, _, _ = next(gen)
        return r, rho


def construct_spiral(n0: int, stages: int, samples: int = 10_000, seed: int = 0,
                     m_value: float = DEFAULT_M, q: float = LEVEL_RATIO, delta_factor: float = 0.5,
                     max_attempts: int = 40, log=None) -> Construction:
    """Build u_1, ..., u_K by theta-turns, checking (A)-(D) of each stage numerically.

    For each stage the C^1 trigger proposes the largest admissible r; if a
    criterion fails on the turned field, the next smaller candidate is tried.
    """
    thetas = geometry.theta_schedule(n0, stages)
    curve = geometry.diameter()
    sched = AcfSchedule(samples=samples, seed=seed, q=q, delta_factor=delta_factor)
    u = sched.field_for(curve)
    J1u = (1.0, 0.0)
    J0u = harmonic.j0_proxy(u)
    fields = [u]
    records = []
    r_prev = 1.0
    for k, th in enumerate(thetas, start=1):
        gen = sched.candidates(u, curve, th)
        failure = None
        for attempt in range(1, max_attempts + 1):
            try:
                r, rho, dev, delta = next(gen)
            except StopIteration:
                break
            cand = geometry.apply_theta_turn(curve, th, rho, m_value, r_select=r)
            v = sched.field_for(cand)
            J1v = _j_at_one(v, v.samples)
            J0v = harmonic.j0_proxy(v)
            crit = _criteria(u, v, th, r, r_prev, J1u, J1v, J0u, J0v)
            if log:
                log(f"stage {k} attempt {attempt}: r={r:.3e} rho={rho:.3e} "
                    + " ".join(f"{c.name}:{c.margin:+.2e}" for c in crit))
            if all(c.passed for c in crit):
                records.append(StageRecord(k, th, r, rho, attempt, crit, J1v, J0v, dev, delta))
                curve, u, J1u, J0u, r_prev = cand, v, J1v, J0v, r
                fields.append(v)
                break
            failure = next(c for c in crit if not c.passed)
        else:
            failure = failure or Criterion("candidates", math.nan, math.nan, -1)
        if len(records) < k:
            name = failure.name if failure else "candidates"
            raise geometry.ConstructionError(
                f"stage {k}: no admissible radii within {max_attempts} attempts", name, k)
    return Construction(curve, u, records, fields)


def _criteria(u, v, theta, r, r0, J1u, J1v, J0u, J0v) -> list[Criterion]:
    t2 = theta * theta
    out = []
    # (A) sup_{B_r} v < 2 J(1, v) r, the sup being attained on the level circle r
    j = int(np.argmin(np.abs(v.radii - r)))
    sup, allow = level_sup(v, j)
    bound = 2 * (J1v[0] - 3 * J1v[1]) * r
    out.append(Criterion("A", sup, bound, bound - sup - allow))
    # (B) sup_{B_t} v <= (1 + theta^2) sup_{B_t} u for level radii t in [r0, 1]
    worst = math.inf
    for jt, t in enumerate(v.radii):
        if t < r0 * (1 - 1e-12) or jt >= u.stack.known:
            continue
        sv, av = level_sup(v, jt)
        su, au = level_sup(u, jt)
        worst = min(worst, (1 + t2) * su - sv + av + au)
    out.append(Criterion("B", math.nan, math.nan, worst))
    # (C) J(1, v) <= (1 + theta^2) J(1, u)
    bc = (1 + t2) * J1u[0]
    out.append(Criterion("C", J1v[0], bc, bc - J1v[0] + 3 * math.hypot(J1v[1], (1 + t2) * J1u[1])))
    # (D) J(0+, v) > (1 - theta^2)^2 J(0+, u)
    bd = (1 - t2) ** 2 * J0u[0]
    out.append(Criterion("D", J0v[0], bd, J0v[0] - bd + 3 * math.hypot(J0v[1], (1 - t2) ** 2 * J0u[1])))
    return out
