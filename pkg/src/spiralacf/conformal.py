"""Schwarz-Christoffel maps onto the turn domains Omega_theta and Omega_{theta,M}.

Both maps send the upper half plane onto a polygonal domain whose boundary
is horizontal far from the origin.  The derivative is a product of power
factors

    f'(z) = prod_k (z - p_k) ** e_k,

each on its principal branch, so f' is continuous on the closed upper half
plane minus the prevertices and tends to 1 along the positive real axis.
On (-1, 1) this gives f'(t) = ((1+t)/(1-t))**(theta/pi) * exp(-i theta):
the middle side descends at angle -theta, which is the clockwise turn used
by the spiral construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import polyline
from .quadrature import QuadratureError, jacobi_01, legendre_01


class ConformalError(ValueError):
    """Precondition or domain violation for a conformal map query."""


class ParameterProblemError(ArithmeticError):
    """Nonlinear solve for prevertices did not converge."""

    def __init__(self, message: str, residual):
        super().__init__(f"{message}; last residual {np.asarray(residual)!r}")
        self.residual = np.asarray(residual)


@dataclass(frozen=True)
class SCMapSpec:
    prevertices: tuple[float, ...]
    exponents: tuple[float, ...]
    translation: complex = 0j
    theta: float = 0.0
    m_target: float | None = None
    z1: float | None = None
    z2: float | None = None
    layout: str = "theta"
    # images of the prevertices before translation (see _attach_vertices)
    raw_vertices: tuple[complex, ...] = field(default=(), compare=False)

    def __post_init__(self):
        p = self.prevertices
        if len(p) != len(self.exponents):
            raise ConformalError("one exponent per prevertex")
        if any(b <= a for a, b in zip(p[:-1], p[1:])):
            raise ConformalError("prevertices must be strictly increasing")
        if abs(sum(self.exponents)) > 1e-12:
            raise ConformalError("exponents must sum to zero so that |f'| -> 1 at infinity")

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.prevertices, dtype=float)

    @property
    def e(self) -> np.ndarray:
        return np.asarray(self.exponents, dtype=float)

    def vertices(self) -> np.ndarray:
        """Images of the prevertices (translated)."""
        return np.asarray(self.raw_vertices, dtype=complex) + self.translation

    def to_text(self) -> str:
        lines = [
            f"layout = {self.layout}",
            f"theta = {self.theta!r}",
            f"m_target = {self.m_target!r}",
            f"z1 = {self.z1!r}",
            f"z2 = {self.z2!r}",
            "prevertices = " + ", ".join(repr(x) for x in self.prevertices),
            "exponents = " + ", ".join(repr(x) for x in self.exponents),
            f"translation = {float(self.translation.real)!r}, {float(self.translation.imag)!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SCMapSpec":
        kv = {}
        for line in text.strip().splitlines():
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()

        def opt(s):
            return None if s == "None" else float(s)

        tr = [float(x) for x in kv["translation"].split(",")]
        spec = cls(
            prevertices=tuple(float(x) for x in kv["prevertices"].split(",")),
            exponents=tuple(float(x) for x in kv["exponents"].split(",")),
            translation=complex(tr[0], tr[1]),
            theta=float(kv["theta"]),
            m_target=opt(kv["m_target"]),
            z1=opt(kv["z1"]),
            z2=opt(kv["z2"]),
            layout=kv["layout"],
        )
        return _attach_vertices(spec)


# ---------------------------------------------------------------------------
# derivative


def _log_factors(z: np.ndarray, p: np.ndarray, e: np.ndarray, skip: int | None = None):
    w = z[..., None] - p
    im = np.where(w.imag > 0.0, w.imag, 0.0)
    arg = np.arctan2(im, w.real)
    with np.errstate(divide="ignore"):
        logs = e * (np.log(np.abs(w)) + 1j * arg)
    if skip is not None:
        logs[..., skip] = 0.0
    return logs.sum(axis=-1)


def eval_sc_derivative(spec: SCMapSpec, z):
    """f'(z) for z in the closed upper half plane, z not a prevertex."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < -1e-14):
        raise ConformalError("z must lie in the closed upper half plane")
    if np.any(np.min(np.abs(z[..., None] - spec.p), axis=-1) == 0.0):
        raise ConformalError("f' is singular at a prevertex")
    return np.exp(_log_factors(z, spec.p, spec.e))


def _rest(spec: SCMapSpec, z: np.ndarray, k: int) -> np.ndarray:
    return np.exp(_log_factors(z, spec.p, spec.e, skip=k))


def _branch_power(w: complex, e: float) -> complex:
    im = w.imag if w.imag > 0.0 else 0.0
    return complex(np.exp(e * (np.log(abs(w)) + 1j * math.atan2(im, w.real))))


# ---------------------------------------------------------------------------
# path integrals of f'

_ORDER = 20


def _smooth_piece(spec: SCMapSpec, a: complex, b: complex) -> tuple[complex, float]:
    """Gauss-Legendre panels, each no longer than its distance to a prevertex."""
    total, err = 0j, 0.0
    stack = [(a, b)]
    s1, w1 = legendre_01(_ORDER)
    s2, w2 = legendre_01(2 * _ORDER)
    while stack:
        lo, hi = stack.pop()
        mid = 0.5 * (lo + hi)
        clearance = np.min(np.abs(mid - spec.p))
        if abs(hi - lo) > clearance:
            stack.append((mid, hi))
            stack.append((lo, mid))
            continue
        d = hi - lo
        q1 = d * np.dot(w1, eval_sc_derivative(spec, lo + d * s1))
        q2 = d * np.dot(w2, eval_sc_derivative(spec, lo + d * s2))
        total += q2
        err += abs(q2 - q1)
    return total, err


def _singular_start(spec: SCMapSpec, k: int, b: complex) -> tuple[complex, float]:
    """Integral of f' from prevertex k to b along a straight path."""
    pk = spec.p[k]
    ek = spec.e[k]
    others = np.delete(spec.p, k)
    reach = 0.5 * np.min(np.abs(others - pk)) if others.size else np.inf
    d = b - pk
    L = abs(d)
    if L == 0:
        return 0j, 0.0
    cut = min(1.0, reach / L)
    mid = pk + cut * d
    dm = mid - pk
    # (zeta - p_k)**e = (dm)**e * s**e on the straight path
    lead = _branch_power(dm, ek) * dm
    s1, w1 = jacobi_01(_ORDER, ek, 0.0)
    s2, w2 = jacobi_01(2 * _ORDER, ek, 0.0)
    q1 = lead * np.dot(w1, _rest(spec, pk + dm * s1, k))
    q2 = lead * np.dot(w2, _rest(spec, pk + dm * s2, k))
    val, err = q2, abs(q2 - q1)
    if cut < 1.0:
        v, e = _smooth_piece(spec, mid, b)
        val += v
        err += e
    return val, err


def _between_prevertices(spec: SCMapSpec, i: int, j: int) -> tuple[complex, float]:
    """Integral of f' along the real axis from prevertex i to prevertex j > i."""
    a, b = spec.p[i], spec.p[j]
    m = 0.5 * (a + b)
    v1, e1 = _singular_start(spec, i, complex(m))
    v2, e2 = _singular_start(spec, j, complex(m))
    return v1 - v2, e1 + e2


def _attach_vertices(spec: SCMapSpec) -> SCMapSpec:
    W = [0j]
    for k in range(1, len(spec.prevertices)):
        v, _ = _between_prevertices(spec, k - 1, k)
        W.append(W[-1] + v)
    return replace(spec, raw_vertices=tuple(W))


def _raw_map(spec: SCMapSpec, z: complex) -> tuple[complex, float]:
    k = int(np.argmin(np.abs(z - spec.p)))
    base = spec.raw_vertices[k]
    if z == spec.p[k]:
        return base, 0.0
    v, e = _singular_start(spec, k, z)
    return base + v, e


def eval_sc_map(spec: SCMapSpec, z, tol: float = 1e-9):
    """f(z) = translation + integral of f' from a prevertex to z.

    Raises QuadratureError when the doubled-order estimate exceeds ``tol``
    (relative to max(1, |f(z)|)).
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag < -1e-14):
        raise ConformalError("z must lie in the closed upper half plane")
    flat = z_arr.ravel()
    out = np.empty_like(flat)
    for i, zi in enumerate(flat):
        v, e = _raw_map(spec, complex(zi))
        v += spec.translation
        if e > tol * max(1.0, abs(v)):
            raise QuadratureError(f"SC map quadrature at z={zi}", e)
        out[i] = v
    return out.reshape(z_arr.shape) if z_arr.ndim else out[0]


# ---------------------------------------------------------------------------
# f_theta


def check_theta(theta: float, theta_max: float | None = None) -> None:
    if theta_max is None:
        from .config import measured_theta0

        theta_max = measured_theta0()
    if not (0.0 < theta <= theta_max + 1e-15):
        raise ConformalError(f"theta={theta} outside (0, theta0={theta_max}]")


@lru_cache(maxsize=128)
def ftheta_spec(theta: float) -> SCMapSpec:
    """f_theta, translated so the middle side of the image is centred at 0."""
    if not (0.0 <= theta < math.pi / 2):
        raise ConformalError("theta must lie in [0, pi/2)")
    a = theta / math.pi
    spec = _attach_vertices(
        SCMapSpec(prevertices=(-1.0, 1.0), exponents=(a, -a), theta=theta, layout="theta")
    )
    W = spec.raw_vertices
    return replace(spec, translation=-0.5 * (W[0] + W[1]))


def slant_length(theta: float) -> float:
    """Length of the middle side of Omega_theta, 2 pi a / sin(pi a) with a = theta/pi."""
    a = theta / math.pi
    return 2.0 if a == 0 else 2.0 * math.pi * a / math.sin(math.pi * a)


def midpoint_residual(theta: float, t: float) -> tuple[float, float]:
    """Left minus right arc length of the middle side, split at preimage t.

    Both arc lengths are |integral of f'| from the prevertex -1 (resp. +1)
    to t; on (-1, 1) the argument of f' is constant so no cancellation occurs.
    """
    spec = ftheta_spec(theta)
    if t <= -1.0:
        return -slant_length(theta), 0.0
    if t >= 1.0:
        return slant_length(theta), 0.0
    left, e1 = _singular_start(spec, 0, complex(t))
    right, e2 = _singular_start(spec, 1, complex(t))
    return abs(left) - abs(right), e1 + e2


def find_midpoint_preimage(theta: float, *, theta_max: float | None = None,
                           width: float = 1e-12) -> float:
    """t_theta in (-1, 1): the preimage of the midpoint of the middle side."""
    check_theta(theta, theta_max)
    lo, hi = -1.0, 1.0
    r_lo = midpoint_residual(theta, lo)[0]
    r_hi = midpoint_residual(theta, hi)[0]
    if not (r_lo < 0 < r_hi):
        raise QuadratureError("midpoint residual not bracketed", abs(r_lo) + abs(r_hi))
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        r = midpoint_residual(theta, mid)[0]
        if r < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gradient_at_origin(theta: float, *, theta_max: float | None = None) -> float:
    """|grad phi_theta(0)| = ((1 - t_theta)/(1 + t_theta))**(theta/pi)."""
    t = find_midpoint_preimage(theta, theta_max=theta_max)
    return ((1.0 - t) / (1.0 + t)) ** (theta / math.pi)


# ---------------------------------------------------------------------------
# f_{theta,M}

_STEP_EXPONENTS = (-0.5, 0.5)


def _fthetam(theta: float, p: np.ndarray, layout: str) -> SCMapSpec:
    a = theta / math.pi
    spec = SCMapSpec(
        prevertices=tuple(float(x) for x in p),
        exponents=(-0.5, 0.5, a, -a, -0.5, 0.5),
        theta=theta,
        layout=layout,
        z1=float(p[4]),
        z2=float(p[5]),
    )
    spec = _attach_vertices(spec)
    W = spec.raw_vertices
    return replace(spec, translation=-0.5 * (W[2] + W[3]))


def _side_lengths(spec: SCMapSpec) -> np.ndarray:
    V = spec.vertices()
    return np.abs(np.diff(V))


def _unpack(x: np.ndarray, layout: str) -> np.ndarray:
    g = np.exp(x)
    if layout == "symmetric":
        z1 = 1.0 + g[0]
        z2 = z1 + g[1]
        return np.array([-z2, -z1, -1.0, 1.0, z1, z2])
    p3 = 1.0 + g[0]
    p4 = p3 + g[1]
    p2 = -1.0 - g[2]
    p1 = p2 - g[3]
    return np.array([p1, p2, -1.0, 1.0, p3, p4])


def _residual(theta: float, m: float, x: np.ndarray, layout: str) -> np.ndarray:
    spec = _fthetam(theta, _unpack(x, layout), layout)
    if layout == "symmetric":
        w = spec.vertices()[5]
        return np.array([w.real - m, w.imag])
    sL, hL, L, hR, sR = _side_lengths(spec)
    step = 0.5 * L * math.sin(theta)
    run = m - 0.5 * L * math.cos(theta)
    return np.array([hR - run, sR - step, hL - run, sL - step])


def solve_parameter_problem(theta: float, m_target: float, *, layout: str = "balanced",
                            theta_max: float | None = None, tol: float = 1e-12,
                            max_iter: int = 60) -> SCMapSpec:
    """Prevertices of f_{theta,M} such that f(z2) = M + 0i.

    ``layout="balanced"`` solves for four free prevertices so the image is
    the point-symmetric domain: horizontal rays on the real axis beyond
    |x| = M, a right-angle step at x = +-M, horizontal runs, and the middle
    side of slope -theta centred at 0.  ``layout="symmetric"`` keeps the
    +-z1, +-z2 placement and only matches f(z2) = M + 0i.
    """
    check_theta(theta, theta_max)
    if layout not in ("balanced", "symmetric"):
        raise ConformalError(f"unknown layout {layout!r}")
    L0 = slant_length(theta)
    if m_target <= 0.5 * L0:
        raise ConformalError(f"M={m_target} must exceed half the middle side ({0.5 * L0:.4f})")
    step = 0.5 * L0 * math.sin(theta)
    run = m_target - 0.5 * L0 * math.cos(theta)
    g_step = max(2 * step / math.pi, 1e-6)
    x = np.log([run, g_step]) if layout == "symmetric" else np.log([run, g_step, run, g_step])

    res = _residual(theta, m_target, x, layout)
    for _ in range(max_iter):
        nrm = np.linalg.norm(res)
        if nrm < tol * max(1.0, m_target):
            break
        J = np.empty((res.size, x.size))
        for j in range(x.size):
            h = 1e-7
            xp = x.copy()
            xp[j] += h
            J[:, j] = (_residual(theta, m_target, xp, layout) - res) / h
        dx = np.linalg.solve(J, -res)
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * dx
            rn = _residual(theta, m_target, xn, layout)
            if np.linalg.norm(rn) < nrm:
                break
            lam *= 0.5
        else:
            raise ParameterProblemError("damped Newton stalled", res)
        x, res = xn, rn
    else:
        raise ParameterProblemError("iteration cap reached", res)
    spec = _fthetam(theta, _unpack(x, layout), layout)
    return replace(spec, m_target=float(m_target))


def parameter_residuals(spec: SCMapSpec) -> np.ndarray:
    """Re-integrated residuals of the parameter problem at the stored prevertices."""
    fresh = _fthetam(spec.theta, spec.p, spec.layout)
    if spec.layout == "symmetric":
        w = eval_sc_map(fresh, complex(spec.z2))
        return np.array([w.real - spec.m_target, w.imag])
    sL, hL, L, hR, sR = _side_lengths(fresh)
    step = 0.5 * L * math.sin(spec.theta)
    run = spec.m_target - 0.5 * L * math.cos(spec.theta)
    return np.array([hR - run, sR - step, hL - run, sL - step])


# ---------------------------------------------------------------------------
# image boundary and inversion


def boundary_polyline(spec: SCMapSpec, radius: float) -> np.ndarray:
    """Image boundary from |w| = radius on the left ray to |w| = radius on the right."""
    V = spec.vertices()
    if np.max(np.abs(V)) >= radius:
        raise ConformalError("radius must enclose every vertex")
    # both far sides are horizontal rays
    yl, yr = V[0].imag, V[-1].imag
    left = complex(-math.sqrt(radius**2 - yl**2), yl)
    right = complex(math.sqrt(radius**2 - yr**2), yr)
    return np.concatenate([[left], V, [right]])


def in_image(spec: SCMapSpec, w, radius: float | None = None) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    R = radius or max(4.0 * np.max(np.abs(spec.vertices())), 2.0 * np.max(np.abs(w)) + 1.0)
    return polyline.left_of_open_curve(boundary_polyline(spec, R), w)


@lru_cache(maxsize=32)
def _seed_grid(spec: SCMapSpec):
    zs = []
    for pk in spec.p:
        for r in np.geomspace(1e-4, 50.0, 28):
            for phi in np.linspace(0.05, math.pi - 0.05, 11):
                zs.append(pk + r * np.exp(1j * phi))
    for r in np.geomspace(60.0, 1e4, 12):
        for phi in np.linspace(0.02, math.pi - 0.02, 25):
            zs.append(r * np.exp(1j * phi))
    zs = np.array(zs)
    ws = np.array([_raw_map(spec, z)[0] for z in zs]) + spec.translation
    return zs, ws


def invert_sc_map(spec: SCMapSpec, w: complex, tol: float = 1e-11, max_iter: int = 60) -> complex:
    """Newton inversion z = f^{-1}(w), seeded from a cached grid of images."""
    zs, ws = _seed_grid(spec)
    order = np.argsort(np.abs(ws - w))
    scale = max(1.0, abs(w))
    for start in order[:6]:
        z = zs[start]
        fz = eval_sc_map(spec, z) - w
        for _ in range(max_iter):
            if abs(fz) < tol * scale:
                return z
            step = fz / eval_sc_derivative(spec, z)
            lam = 1.0
            while lam > 1e-6:
                zn = z - lam * step
                if zn.imag < 0:
                    zn = complex(zn.real, 0.0)
                if np.min(np.abs(zn - spec.p)) > 0:
                    fn = eval_sc_map(spec, zn) - w
                    if abs(fn) < abs(fz):
                        break
                lam *= 0.5
            else:
                break
            z, fz = zn, fn
        if abs(fz) < tol * scale:
            return z
    # fallback: continuation along the straight image path from the nearest seed
    z = zs[order[0]]
    w0 = ws[order[0]]
    for s in np.linspace(0.0, 1.0, 65)[1:]:
        target = w0 + s * (w - w0)
        for _ in range(max_iter):
            fz = eval_sc_map(spec, z) - target
            if abs(fz) < tol * scale:
                break
            zn = z - fz / eval_sc_derivative(spec, z)
            z = complex(zn.real, max(zn.imag, 0.0))
    if abs(eval_sc_map(spec, z) - w) < tol * scale:
        return z
    raise ConformalError(f"Newton inversion failed at w={w} (residual {abs(fz):.2e})")


@dataclass(frozen=True)
class ConformalField:
    """phi(w) = (Im f^{-1}(w))^+ for an SC map spec."""

    spec: SCMapSpec

    def value(self, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        inside = in_image(self.spec, w)
        out = np.zeros(w.shape)
        for i in np.flatnonzero(inside):
            out[i] = max(invert_sc_map(self.spec, complex(w[i])).imag, 0.0)
        return out

    def gradient(self, w) -> np.ndarray:
        """(d/du, d/dv) of phi; grad Im F = (Im F', Re F') with F' = 1/f'."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        inside = in_image(self.spec, w)
        out = np.zeros(w.shape, dtype=complex)
        for i in np.flatnonzero(inside):
            z = invert_sc_map(self.spec, complex(w[i]))
            Fp = 1.0 / eval_sc_derivative(self.spec, z)
            out[i] = complex(Fp.imag, Fp.real)
        return out
