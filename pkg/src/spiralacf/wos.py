"""Walk-on-spheres kernels (numba) for Dirichlet problems in slit disks.

A problem is a stack of nested circles ("levels").  On level j the
positive phase meets the circle |x| = R_j in one arc [alpha_j, alpha_j +
Lambda_j] carrying data sum_n d_jn sin(n pi (phi - alpha_j) / Lambda_j);
the data vanish on the interface.  A walk started at x uses the level it was
assigned to, is absorbed in an eps-shell around the interface or the circle,
and scores the boundary value minus a linear control variate
h_j(x) = c_j Im(e^{-i beta_j} x).

Random numbers come from splitmix64 streams keyed by (seed, query, walk), so
every estimate is independent of execution order and thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

# skip the TBB probe: the installed TBB is too old and only produces a warning
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 1.0 / 9007199254740992.0
MAX_STEPS = 100_000


@nb.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def stream_key(seed, query, walk, stream):
    z = _mix(np.uint64(seed) + _GOLDEN)
    z = _mix(z ^ (np.uint64(query) + _GOLDEN * np.uint64(3)))
    z = _mix(z ^ (np.uint64(walk) + _GOLDEN * np.uint64(5)))
    return _mix(z ^ (np.uint64(stream) + _GOLDEN * np.uint64(7)))


@nb.njit(cache=True, inline="always")
def _uniform(state):
    state = state + _GOLDEN
    return state, float(_mix(state) >> np.uint64(11)) * _TWO53


@nb.njit(cache=True)
def uniforms(seed, query, walk, n):
    """First n uniforms of a stream (for tests of the generator)."""
    out = np.empty(n)
    s = stream_key(seed, query, walk, 0)
    for i in range(n):
        s, out[i] = _uniform(s)
    return out


@nb.njit(cache=True)
def _nearest(x, y, ax, ay, bx, by, lo, hi):
    best = 1e300
    fx = 0.0
    fy = 0.0
    for k in range(lo, hi):
        dx = bx[k] - ax[k]
        dy = by[k] - ay[k]
        dd = dx * dx + dy * dy
        t = 0.0
        if dd > 0.0:
            t = ((x - ax[k]) * dx + (y - ay[k]) * dy) / dd
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        px = ax[k] + t * dx
        py = ay[k] + t * dy
        d2 = (x - px) * (x - px) + (y - py) * (y - py)
        if d2 < best:
            best = d2
            fx = px
            fy = py
    return math.sqrt(best), fx, fy


@nb.njit(cache=True)
def _series(phi, alpha, lam, coeffs, ncoef):
    psi = (phi - alpha) % (2.0 * math.pi)
    if psi > lam:
        return 0.0
    s = 0.0
    w = math.pi * psi / lam
    for n in range(ncoef):
        s += coeffs[n] * math.sin((n + 1) * w)
    return s


@nb.njit(cache=True)
def _cv(x, y, c, cb, sb):
    return c * (cb * y - sb * x)


@nb.njit(cache=True)
def _walk(x, y, j, radius, alpha, lam, coeffs, ncoef, cvc, cvb, seg_lo, seg_hi,
          ax, ay, bx, by, eps_rel, state):
    """One walk on level j; returns (boundary value - control variate, state, steps)."""
    R = radius[j]
    eps = eps_rel * R
    cb = math.cos(cvb[j])
    sb = math.sin(cvb[j])
    lo = seg_lo[j]
    hi = seg_hi[j]
    for step in range(MAX_STEPS):
        d_int, fx, fy = _nearest(x, y, ax, ay, bx, by, lo, hi)
        rr = math.sqrt(x * x + y * y)
        d_out = R - rr
        if d_int <= eps or d_out <= eps:
            if d_int <= d_out:
                return -_cv(fx, fy, cvc[j], cb, sb), state, step
            phi = math.atan2(y, x)
            ex = R * math.cos(phi)
            ey = R * math.sin(phi)
            g = _series(phi, alpha[j], lam[j], coeffs[j], ncoef[j])
            return g - _cv(ex, ey, cvc[j], cb, sb), state, step
        d = d_int if d_int < d_out else d_out
        state, u = _uniform(state)
        ang = 2.0 * math.pi * u
        x += d * math.cos(ang)
        y += d * math.sin(ang)
    # walk did not terminate: score the nearer boundary (counted by the caller)
    return 0.0, state, MAX_STEPS


@nb.njit(cache=True)
def _level_for(x, y, radius, nknown):
    """Index of the smallest known level strictly enclosing (x, y), or -1 outside level 0."""
    rr = math.sqrt(x * x + y * y)
    j = -1
    for i in range(nknown):
        if radius[i] > rr * (1.0 + 1e-13):
            j = i
    return j


@nb.njit(cache=True)
def _point_value(x, y, j, radius, alpha, lam, coeffs, ncoef, cvc, cvb, seg_lo, seg_hi,
                 ax, ay, bx, by, eps_rel, state):
    """u at (x, y) from one walk, with the level-0 circle reflected when |x| > R_0.

    Level 0 is assumed to carry data y on a flat diameter near its circle, so
    u(y) = Im y + Im y* - u(y*) with y* = R_0^2 y / |y|^2.
    """
    if j >= 0:
        cb = math.cos(cvb[j])
        sb = math.sin(cvb[j])
        v, state, steps = _walk(x, y, j, radius, alpha, lam, coeffs, ncoef, cvc, cvb,
                                seg_lo, seg_hi, ax, ay, bx, by, eps_rel, state)
        return _cv(x, y, cvc[j], cb, sb) + v, state, steps
    R0 = radius[0]
    r2 = x * x + y * y
    xs = R0 * R0 * x / r2
    ys = R0 * R0 * y / r2
    cb = math.cos(cvb[0])
    sb = math.sin(cvb[0])
    v, state, steps = _walk(xs, ys, 0, radius, alpha, lam, coeffs, ncoef, cvc, cvb,
                            seg_lo, seg_hi, ax, ay, bx, by, eps_rel, state)
    inner = _cv(xs, ys, cvc[0], cb, sb) + v
    return y + ys - inner, state, steps


@nb.njit(cache=True, parallel=True)
def value_kernel(px, py, level, qid, seed, nwalks, radius, alpha, lam, coeffs, ncoef,
                 cvc, cvb, seg_lo, seg_hi, ax, ay, bx, by, eps_rel):
    """Per-point mean and variance of single-walk estimates of u (level fixed per point)."""
    n = px.size
    mean = np.zeros(n)
    var = np.zeros(n)
    stuck = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        j = level[i]
        cb = math.cos(cvb[j])
        sb = math.sin(cvb[j])
        base = _cv(px[i], py[i], cvc[j], cb, sb)
        s1 = 0.0
        s2 = 0.0
        for w in range(nwalks):
            st = stream_key(seed, qid[i], w, 0)
            v, st, steps = _walk(px[i], py[i], j, radius, alpha, lam, coeffs, ncoef, cvc, cvb,
                                 seg_lo, seg_hi, ax, ay, bx, by, eps_rel, st)
            if steps >= MAX_STEPS:
                stuck[i] += 1
            s1 += v
            s2 += v * v
        m = s1 / nwalks
        mean[i] = base + m
        var[i] = max(s2 / nwalks - m * m, 0.0) * nwalks / max(nwalks - 1, 1)
    return mean, var, stuck


@nb.njit(cache=True, parallel=True)
def gradient_kernel(px, py, ball, qid, seed, nwalks, nknown, radius, alpha, lam, coeffs,
                    ncoef, cvc, cvb, seg_lo, seg_hi, ax, ay, bx, by, eps_rel):
    """Antithetic mean-value gradient estimates grad u(x) = E[(u(x+be)-u(x-be)) e] / b.

    The linear control variate of the level enclosing x is differenced out
    analytically.  Returns per-point means and variances of both components.
    """
    n = px.size
    gx = np.zeros(n)
    gy = np.zeros(n)
    vx = np.zeros(n)
    vy = np.zeros(n)
    stuck = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        b = ball[i]
        j0 = _level_for(px[i], py[i], radius, nknown)
        if j0 < 0:
            j0 = 0
        hx = -cvc[j0] * math.sin(cvb[j0])
        hy = cvc[j0] * math.cos(cvb[j0])
        sx = 0.0
        sy = 0.0
        sxx = 0.0
        syy = 0.0
        for w in range(nwalks):
            st = stream_key(seed, qid[i], w, 1)
            st, u = _uniform(st)
            ang = 2.0 * math.pi * u
            ex = math.cos(ang)
            ey = math.sin(ang)
            x1 = px[i] + b * ex
            y1 = py[i] + b * ey
            x2 = px[i] - b * ex
            y2 = py[i] - b * ey
            j1 = _level_for(x1, y1, radius, nknown)
            j2 = _level_for(x2, y2, radius, nknown)
            u1, st, s1 = _point_value(x1, y1, j1, radius, alpha, lam, coeffs, ncoef, cvc, cvb,
                                      seg_lo, seg_hi, ax, ay, bx, by, eps_rel, st)
            u2, st, s2 = _point_value(x2, y2, j2, radius, alpha, lam, coeffs, ncoef, cvc, cvb,
                                      seg_lo, seg_hi, ax, ay, bx, by, eps_rel, st)
            if s1 >= MAX_STEPS or s2 >= MAX_STEPS:
                stuck[i] += 1
            du = u1 - u2 - 2.0 * b * (ex * hx + ey * hy)
            dx = du * ex / b
            dy = du * ey / b
            sx += dx
            sy += dy
            sxx += dx * dx
            syy += dy * dy
        mx = sx / nwalks
        my = sy / nwalks
        gx[i] = hx + mx
        gy[i] = hy + my
        vx[i] = max(sxx / nwalks - mx * mx, 0.0) * nwalks / max(nwalks - 1, 1)
        vy[i] = max(syy / nwalks - my * my, 0.0) * nwalks / max(nwalks - 1, 1)
    return gx, gy, vx, vy, stuck


# ---------------------------------------------------------------------------
# python-side packing


@dataclass
class LevelStack:
    """Mutable stack of levels filled top-down; ``known`` levels carry data."""

    radius: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    coeffs: np.ndarray
    ncoef: np.ndarray
    cvc: np.ndarray
    cvb: np.ndarray
    seg_lo: np.ndarray
    seg_hi: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    known: int = 0

    @classmethod
    def empty(cls, radii, segments_a, segments_b, max_coef):
        n = len(radii)
        a = np.asarray(segments_a, dtype=complex)
        b = np.asarray(segments_b, dtype=complex)
        return cls(
            radius=np.asarray(radii, dtype=float),
            alpha=np.zeros(n),
            lam=np.full(n, math.pi),
            coeffs=np.zeros((n, max_coef)),
            ncoef=np.zeros(n, dtype=np.int64),
            cvc=np.zeros(n),
            cvb=np.zeros(n),
            seg_lo=np.zeros(n, dtype=np.int64),
            seg_hi=np.full(n, a.size, dtype=np.int64),
            ax=np.ascontiguousarray(a.real),
            ay=np.ascontiguousarray(a.imag),
            bx=np.ascontiguousarray(b.real),
            by=np.ascontiguousarray(b.imag),
        )

    def args(self):
        return (self.radius, self.alpha, self.lam, self.coeffs, self.ncoef, self.cvc, self.cvb,
                self.seg_lo, self.seg_hi, self.ax, self.ay, self.bx, self.by)


def estimate_values(stack: LevelStack, points, level, qid, seed: int, nwalks: int, eps_rel: float):
    p = np.asarray(points, dtype=complex)
    mean, var, stuck = value_kernel(
        np.ascontiguousarray(p.real), np.ascontiguousarray(p.imag),
        np.asarray(level, dtype=np.int64), np.asarray(qid, dtype=np.int64),
        np.uint64(seed), int(nwalks), *stack.args(), float(eps_rel),
    )
    return mean, np.sqrt(var / nwalks), stuck


def estimate_gradients(stack: LevelStack, points, ball, qid, seed: int, nwalks: int, eps_rel: float):
    p = np.asarray(points, dtype=complex)
    gx, gy, vx, vy, stuck = gradient_kernel(
        np.ascontiguousarray(p.real), np.ascontiguousarray(p.imag),
        np.asarray(ball, dtype=float), np.asarray(qid, dtype=np.int64),
        np.uint64(seed), int(nwalks), int(stack.known), *stack.args(), float(eps_rel),
    )
    return gx + 1j * gy, np.sqrt(vx / nwalks) + 1j * np.sqrt(vy / nwalks), stuck
