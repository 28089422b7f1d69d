"""Numerical certificates for the angle lemmas behind f_theta.

Every check returns a :class:`LemmaCertificate` whose margins are signed so
that a positive margin means the claimed bound holds.  Certificates are pure
functions of the grid, so they are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .conformal import find_midpoint_preimage, midpoint_residual
from .quadrature import composite_legendre, integrate_interval

LEMMA_IDS = ("integral", "resource", "decay", "show", "theta0", "limit-4", "derivative-at-0")

Function = Callable[[np.ndarray], np.ndarray]


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class CertificateRow:
    theta: float
    computed: float
    bound: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class LemmaCertificate:
    lemma_id: str
    grid: tuple[float, ...]
    margins: tuple[float, ...]
    tolerance: float
    rows: tuple[CertificateRow, ...] = field(default=(), compare=False)
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def verdict(self) -> bool:
        return all(m > -self.tolerance for m in self.margins)

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else math.inf

    def csv_rows(self) -> list[tuple]:
        """Rows (lemma_id, theta, computed, bound, margin, pass)."""
        return [
            (self.lemma_id, r.theta, r.computed, r.bound, r.margin, int(r.passed))
            for r in self.rows
        ]


def _certificate(lemma_id, grid, computed, bound, margins, tolerance, **extras):
    rows = tuple(
        CertificateRow(float(t), float(c), float(b), float(m), bool(m > -tolerance))
        for t, c, b, m in zip(grid, computed, bound, margins)
    )
    return LemmaCertificate(
        lemma_id=lemma_id,
        grid=tuple(float(t) for t in grid),
        margins=tuple(float(m) for m in margins),
        tolerance=tolerance,
        rows=rows,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# integral comparison lemmas


def _integral(h: Function, a: float, b: float) -> float:
    return float(composite_legendre(h, a, b, panels=4, order=16)[0])


def _check_positive_ratio(f: Function, g: Function, a: float, b: float, samples: int = 65):
    x = np.linspace(a, b, samples)
    fx, gx = f(x), g(x)
    if np.any(fx <= 0) or np.any(gx <= 0):
        raise PreconditionError("f and g must be positive")
    ratio = fx / gx
    if np.any(np.diff(ratio) < -1e-12 * np.abs(ratio[1:])):
        raise PreconditionError("f/g must be nondecreasing")


def integral_lemma_margin(f: Function, g: Function, points: Sequence[float]) -> float:
    """Right ratio minus left ratio for four increasing points."""
    x1, x2, x3, x4 = (float(p) for p in points)
    if not (x1 < x2 <= x3 < x4):
        raise PreconditionError("points must be increasing")
    _check_positive_ratio(f, g, x1, x4)
    left = _integral(f, x1, x2) / _integral(g, x1, x2)
    right = _integral(f, x3, x4) / _integral(g, x3, x4)
    return right - left


def check_integral_lemma(f: Function, g: Function, points: Sequence[float], tol: float = 1e-12) -> bool:
    return integral_lemma_margin(f, g, points) > -tol


def balance_point(h: Function, m_value: float, xtol: float = 1e-14) -> float:
    """The x in (0, 1) with m + int_0^x h = int_x^1 h."""
    total = _integral(h, 0.0, 1.0)
    if total <= m_value:
        raise PreconditionError(f"integral {total:.6g} does not exceed M={m_value:.6g}")

    def resid(x):
        head = _integral(h, 0.0, x) if x > 0 else 0.0
        return m_value + 2.0 * head - total

    return brentq(resid, 0.0, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps)


def resource_lemma_points(f: Function, g: Function, m_value: float) -> tuple[float, float]:
    _check_positive_ratio(f, g, 0.0, 1.0)
    if np.any(f(np.linspace(0, 1, 65)) < g(np.linspace(0, 1, 65))):
        raise PreconditionError("f must dominate g")
    return balance_point(g, m_value), balance_point(f, m_value)


def check_resource_lemma(f: Function, g: Function, m_value: float, tol: float = 1e-12) -> bool:
    x1, x2 = resource_lemma_points(f, g, m_value)
    return x2 - x1 > -tol


def random_admissible_pair(rng: np.random.Generator, degree: int = 3):
    """g = exp(random polynomial), f = g * exp(polynomial with nonnegative coefficients).

    On [0, 1] the second polynomial is nondecreasing, so f/g is increasing and f >= g.
    """
    cg = rng.normal(0.0, 1.0, degree + 1)
    cr = rng.uniform(0.0, 1.0, degree + 1)
    cr[0] = 0.0

    def g(x):
        return np.exp(np.polynomial.polynomial.polyval(x, cg))

    def f(x):
        return g(x) * np.exp(np.polynomial.polynomial.polyval(x, cr))

    return f, g


def randomized_integral_lemma(trials: int = 1000, seed: int = 0) -> LemmaCertificate:
    rng = np.random.default_rng(seed)
    margins = []
    for _ in range(trials):
        f, g = random_admissible_pair(rng)
        pts = np.sort(rng.uniform(0.0, 1.0, 4))
        margins.append(integral_lemma_margin(f, g, pts))
    idx = np.arange(trials, dtype=float)
    return _certificate("integral", idx, margins, np.zeros(trials), margins, 1e-12, seed=seed)


def randomized_resource_lemma(trials: int = 1000, seed: int = 1) -> LemmaCertificate:
    rng = np.random.default_rng(seed)
    margins = []
    for _ in range(trials):
        f, g = random_admissible_pair(rng)
        m_value = rng.uniform(0.0, 0.95) * _integral(g, 0.0, 1.0)
        x1, x2 = resource_lemma_points(f, g, m_value)
        margins.append(x2 - x1)
    idx = np.arange(trials, dtype=float)
    return _certificate("resource", idx, margins, np.zeros(trials), margins, 1e-12, seed=seed)


# ---------------------------------------------------------------------------
# decay of t_theta


def show_expression(theta):
    """The left side E(theta) of the sufficient inequality for tau_theta <= 2 theta/pi."""
    a = np.asarray(theta, dtype=float) / math.pi
    b = 1.0 - 2.0 * a
    return 0.5**a / (1.0 + a) + (1.0 - 2.0 * b**b) / b


def tau_theta(theta: float) -> float:
    """Closed-form balance point for the dominating integrand (1 - t)**(-2 theta/pi)."""
    a = theta / math.pi
    b = 1.0 - 2.0 * a
    m_value = 0.5**a / (1.0 + a)
    return 1.0 - ((1.0 + b * m_value) / 2.0) ** (1.0 / b)


def xi_theta(theta: float) -> float:
    """Balance point after replacing the left half of the integrand by ((1+t)/2)**(theta/pi)."""
    a = theta / math.pi
    m_value = 0.5**a / (1.0 + a)
    total = integrate_interval(lambda t: (1.0 + t) ** a, 0.0, 1.0, right=-a)[0].real

    def resid(x):
        head = integrate_interval(lambda t: ((1.0 + t) / (1.0 - t)) ** a, 0.0, x)[0].real
        return m_value + 2.0 * head - total

    return brentq(resid, 0.0, 1.0 - 1e-15, xtol=1e-15)


def verify_decay(theta_grid: Sequence[float], theta_max: float | None = None,
                 tolerance: float = 0.0) -> LemmaCertificate:
    """0 < t_theta <= 2 theta/pi together with t_theta <= xi_theta <= tau_theta."""
    grid = [float(t) for t in theta_grid]
    t_vals, xi_vals, tau_vals, qerr, margins = [], [], [], [], []
    for th in grid:
        t = find_midpoint_preimage(th, theta_max=theta_max)
        xi, tau = xi_theta(th), tau_theta(th)
        bound = 2.0 * th / math.pi
        t_vals.append(t)
        xi_vals.append(xi)
        tau_vals.append(tau)
        qerr.append(midpoint_residual(th, t)[1])
        margins.append(min(t, bound - t, xi - t + 1e-12, tau - xi + 1e-12))
    bounds = 2.0 * np.array(grid) / math.pi
    return _certificate(
        "decay", grid, t_vals, bounds, margins, tolerance,
        xi=tuple(xi_vals), tau=tuple(tau_vals), quadrature_error=tuple(qerr),
    )


def derivative_at_zero(h: float = 1e-4) -> tuple[float, float]:
    """Centred difference of E at 0 with two-level Richardson; returns (estimate, observed order)."""
    def d(step):
        return (show_expression(step) - show_expression(-step)) / (2.0 * step)

    d1, d2, d4 = d(h), d(h / 2), d(h / 4)
    order = math.log2(abs(d1 - d2) / abs(d2 - d4))
    return float((4.0 * d2 - d1) / 3.0), order


def verify_show_inequality(theta_grid: Sequence[float], tolerance: float = 0.0) -> LemmaCertificate:
    grid = np.asarray(theta_grid, dtype=float)
    values = show_expression(grid)
    return _certificate(
        "show", grid, values, np.zeros_like(grid), values, tolerance,
        value_at_zero=float(show_expression(1e-14)),
    )


def verify_derivative_at_zero(h: float = 1e-4, tolerance: float = 1e-3) -> LemmaCertificate:
    target = (1.0 + math.log(0.5)) / math.pi
    est, order = derivative_at_zero(h)
    margin = tolerance - abs(est - target)
    return _certificate("derivative-at-0", [0.0], [est], [target], [margin], 0.0, observed_order=order)


# ---------------------------------------------------------------------------
# gradient at the origin


def limit_ratio(theta: float) -> float:
    """(1 - ((1-2x)/(1+2x))**x) / x**2 with x = theta/pi, evaluated without cancellation."""
    x = theta / math.pi
    return -math.expm1(x * (math.log1p(-2.0 * x) - math.log1p(2.0 * x))) / x**2


def verify_limit_four(thetas: Sequence[float] = (1e-3,), tolerance: float = 1e-2) -> LemmaCertificate:
    vals = [limit_ratio(t) for t in thetas]
    margins = [tolerance - abs(v - 4.0) for v in vals]
    return _certificate("limit-4", thetas, vals, [4.0] * len(vals), margins, 0.0)


def verify_theta0(theta_grid: Sequence[float], theta_max: float | None = None,
                  tolerance: float = 0.0) -> LemmaCertificate:
    """1 - theta**2 < |grad phi_theta(0)| <= 1 at each grid angle."""
    grid = [float(t) for t in theta_grid]
    grads, margins = [], []
    for th in grid:
        t = find_midpoint_preimage(th, theta_max=theta_max)
        g = ((1.0 - t) / (1.0 + t)) ** (th / math.pi)
        grads.append(g)
        margins.append(min(g - (1.0 - th * th), 1.0 - g))
    return _certificate("theta0", grid, grads, [1.0 - t * t for t in grid], margins, tolerance)


def working_theta0(theta_grid: Sequence[float], margin: float | None = None) -> float:
    """Largest grid angle such that decay, show and theta0 hold with margin at all smaller grid angles."""
    from .config import THETA0_MARGIN

    margin = THETA0_MARGIN if margin is None else margin
    cap = math.pi / 2
    best = 0.0
    for th in sorted(float(t) for t in theta_grid):
        ok = (
            verify_show_inequality([th]).min_margin > margin
            and verify_decay([th], theta_max=cap).min_margin > margin
            and verify_theta0([th], theta_max=cap).min_margin > margin
        )
        if not ok:
            break
        best = th
    if best == 0.0:
        raise PreconditionError("no grid angle passes the angle lemmas")
    return best


def verify_all(theta_grid: Sequence[float], trials: int = 1000, seed: int = 0) -> list[LemmaCertificate]:
    """The seven certificates, in a fixed order."""
    return [
        randomized_integral_lemma(trials, seed),
        randomized_resource_lemma(trials, seed + 1),
        verify_decay(theta_grid),
        verify_show_inequality(theta_grid),
        verify_theta0(theta_grid),
        verify_limit_four(),
        verify_derivative_at_zero(),
    ]
