"""Harmonic phases: exact conformal fields and walk-on-spheres estimates.

``ExactField`` evaluates phi = (Im f^{-1})^+ for a Schwarz-Christoffel map.
``WosField`` estimates a harmonic function that vanishes on a polyline
interface and has sine-series data on the positive arc of one or more
nested circles.  Spiral fields are solved top-down: the values on each
level circle are estimated by walks on the level above, then expanded in a
sine series (discrete sine transform of midpoint samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import dst

from . import geometry, polyline, wos
from .config import LEVEL_RATIO
from .conformal import (ConformalField, SCMapSpec, boundary_polyline, ftheta_spec,
                        in_image, solve_parameter_problem)

EPS_REL = 1e-6


class HarmonicError(ValueError):
    pass


def sine_coefficients(values: np.ndarray) -> np.ndarray:
    """d_n with values_i = sum_{n=1}^N d_n sin(n pi (i + 1/2) / N)."""
    v = np.asarray(values, dtype=float)
    N = v.size
    d = dst(v, type=2) / N
    d[-1] *= 0.5
    return d


def sine_matrix(N: int) -> np.ndarray:
    """Linear map from midpoint samples to sine coefficients (for error propagation)."""
    return np.column_stack([sine_coefficients(np.eye(N)[i]) for i in range(N)])


def midpoint_angles(alpha: float, lam: float, N: int) -> np.ndarray:
    return alpha + lam * (np.arange(N) + 0.5) / N


def eval_series(coeffs: np.ndarray, alpha: float, lam: float, phi) -> np.ndarray:
    psi = np.mod(np.asarray(phi, dtype=float) - alpha, 2 * math.pi)
    n = np.arange(1, coeffs.size + 1)
    vals = np.sin(np.multiply.outer(math.pi * psi / lam, n)) @ coeffs
    return np.where(psi <= lam, vals, 0.0)


# ---------------------------------------------------------------------------
# exact fields


@dataclass(frozen=True)
class ExactField:
    spec: SCMapSpec
    kind: str = "conformal-exact"

    @property
    def _field(self) -> ConformalField:
        return ConformalField(self.spec)

    def value(self, p) -> np.ndarray:
        return self._field.value(p)

    def gradient(self, p) -> np.ndarray:
        return self._field.gradient(p)

    def contains(self, p) -> np.ndarray:
        return in_image(self.spec, p)


def eval_exact(field: ExactField, p) -> np.ndarray:
    return field.value(p)


def finite_difference_gradient(value: Callable, p: complex, h: float) -> complex:
    """Centred difference of a scalar function of a complex point."""
    p = complex(p)
    vals = np.asarray(value(np.array([p + h, p - h, p + 1j * h, p - 1j * h])), dtype=float)
    return complex((vals[0] - vals[1]) / (2 * h), (vals[2] - vals[3]) / (2 * h))


# ---------------------------------------------------------------------------
# walk-on-spheres fields


@dataclass
class WosField:
    """A Monte Carlo harmonic field on a stack of levels.

    ``contains`` decides membership in the positive phase; points outside
    get the exact value 0.  ``samples`` is the number of walks per query.
    """

    stack: wos.LevelStack
    contains: Callable[[np.ndarray], np.ndarray]
    samples: int
    seed: int
    eps_rel: float = EPS_REL
    node_values: list = field(default_factory=list)
    node_stderr: list = field(default_factory=list)
    coeff_stderr: list = field(default_factory=list)
    mode1_rel: list = field(default_factory=list)
    curve: geometry.InterfaceCurve | None = None
    kind: str = "wos-estimate"
    _query_counter: int = 0

    @property
    def radii(self) -> np.ndarray:
        return self.stack.radius[: self.stack.known]

    def level_of(self, p: np.ndarray) -> np.ndarray:
        r = np.abs(p)
        R = self.radii
        idx = np.searchsorted(-R, -r * (1 + 1e-13), side="left") - 1
        return idx

    def _qids(self, n: int, stream: int) -> np.ndarray:
        return (np.int64(stream) << np.int64(40)) + np.arange(n, dtype=np.int64)

    def value(self, p, samples: int | None = None, stream: int = 1):
        """(mean, stderr) at each point; exact 0 outside the positive phase."""
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        samples = samples or self.samples
        if np.any(np.abs(p) >= self.radii[0]):
            raise HarmonicError("query outside the outermost level")
        inside = np.asarray(self.contains(p), dtype=bool)
        mean = np.zeros(p.size)
        se = np.zeros(p.size)
        if inside.any():
            q = p[inside]
            lev = self.level_of(q)
            m, s, stuck = wos.estimate_values(self.stack, q, lev, self._qids(p.size, stream)[inside],
                                              self.seed, samples, self.eps_rel)
            if stuck.any():
                raise HarmonicError("walks failed to terminate")
            mean[inside] = m
            se[inside] = s
        return mean, se

    def gradient(self, p, ball, samples: int | None = None, stream: int = 2):
        """(mean, stderr) of grad u by the antithetic mean-value estimator with ball radius ``ball``."""
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        ball = np.broadcast_to(np.asarray(ball, dtype=float), p.shape)
        samples = samples or self.samples
        g, s, stuck = wos.estimate_gradients(self.stack, p, ball, self._qids(p.size, stream),
                                             self.seed, samples, self.eps_rel)
        if stuck.any():
            raise HarmonicError("walks failed to terminate")
        return g, s


def eval_wos(field: WosField, p, samples: int | None = None):
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    inside = np.asarray(field.contains(p), dtype=bool)
    if not inside.all():
        raise HarmonicError("point outside the phase region")
    return field.value(p, samples)


def gradient_at(field, p, h: float, samples: int | None = None):
    """Gradient at p: exact formula for conformal fields, mean-value estimator of radius h for WoS.

    Returns (gradient, stderr); the stderr of an exact gradient is 0.
    """
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    if isinstance(field, ExactField):
        return field.gradient(p), np.zeros(p.size, dtype=complex)
    if field.curve is not None:
        d = polyline.distance(field.curve.vertices, p)
    else:
        a, b = field.stack.ax + 1j * field.stack.ay, field.stack.bx + 1j * field.stack.by
        d = polyline.nearest_on_segments(p, a, b)[0]
    if np.any(d <= 2 * h):
        raise HarmonicError("gradient ball too close to the boundary")
    return field.gradient(p, h, samples)


# ---------------------------------------------------------------------------
# single-level domains: B_R ∩ Omega_theta and B_R ∩ Omega_{theta, M}


def _single_level(segments: np.ndarray, R: float, alpha: float, lam: float, coeffs: np.ndarray,
                  cv: float, contains, samples: int, seed: int) -> WosField:
    a, b = polyline.segment_arrays(segments)
    stack = wos.LevelStack.empty([R], a, b, coeffs.size)
    stack.alpha[0], stack.lam[0] = alpha, lam
    stack.coeffs[0] = coeffs
    stack.ncoef[0] = coeffs.size
    stack.cvc[0], stack.cvb[0] = cv, 0.0
    stack.known = 1
    return WosField(stack=stack, contains=contains, samples=samples, seed=seed)


def _arc_of_image(boundary: np.ndarray) -> tuple[float, float]:
    start = float(np.angle(boundary[-1]))
    end = float(np.angle(boundary[0]))
    return start, (end - start) % (2 * math.pi)


def solve_omega_theta(theta: float, r_outer: float, samples: int, seed: int,
                      n_coef: int = 128) -> WosField:
    """WoS field on B_R ∩ Omega_theta with exact phi_theta data on the outer arc."""
    spec = ftheta_spec(theta)
    bnd = boundary_polyline(spec, r_outer)
    alpha, lam = _arc_of_image(bnd)
    phi = midpoint_angles(alpha, lam, n_coef)
    exact = ExactField(spec)
    data = exact.value(r_outer * np.exp(1j * phi) * (1 - 1e-15))
    coeffs = sine_coefficients(data)

    def contains(p):
        p = np.atleast_1d(p)
        return polyline.left_of_open_curve(bnd / r_outer, p / r_outer)

    return _single_level(bnd, r_outer, alpha, lam, coeffs, 1.0, contains, samples, seed)


def solve_truncated(theta: float, m_value: float, r_outer: float, samples: int = 100_000,
                    seed: int = 0) -> WosField:
    """w_R: harmonic in B_R ∩ Omega_{theta,M}, 0 on the notched boundary, y on the outer arc."""
    spec = solve_parameter_problem(theta, m_value)
    if r_outer <= 2.0 * m_value:
        raise HarmonicError("the outer radius must exceed 2M")
    bnd = boundary_polyline(spec, r_outer)
    coeffs = np.array([r_outer])

    def contains(p):
        p = np.atleast_1d(p)
        return polyline.left_of_open_curve(bnd / r_outer, p / r_outer)

    return _single_level(bnd, r_outer, 0.0, math.pi, coeffs, 1.0, contains, samples, seed)


def fthetam_field(theta: float, m_value: float) -> ExactField:
    return ExactField(solve_parameter_problem(theta, m_value))


# ---------------------------------------------------------------------------
# spiral fields


def level_radii(curve: geometry.InterfaceCurve, q: float = LEVEL_RATIO, core_levels: int = 4,
                min_radius: float | None = None) -> np.ndarray:
    """R_j = q^j from 1 down to core_levels levels inside the innermost straight core."""
    stop = min_radius if min_radius is not None else curve.core_half_length * q**core_levels
    n = int(math.floor(math.log(stop) / math.log(q))) + 1
    return q ** np.arange(n + 1)


def _segment_range(curve: geometry.InterfaceCurve, R: float) -> tuple[int, int]:
    a, b = curve.segments()
    d = geometry._segment_origin_distance(a, b)
    idx = np.flatnonzero(d <= R * (1 + 1e-9))
    return int(idx.min()), int(idx.max()) + 1


@dataclass
class SolveStats:
    walks: int = 0
    levels: int = 0


def solve_spiral(curve: geometry.InterfaceCurve, samples: int, seed: int, n_nodes: int = 32,
                 q: float = LEVEL_RATIO, core_levels: int = 4, min_radius: float | None = None,
                 eps_rel: float = EPS_REL, gradient_samples: int | None = None) -> WosField:
    """u harmonic in the positive phase of ``curve`` with data y^+ on the unit circle.

    Levels R_j = q^j are filled top-down; node values on level j come from
    ``samples`` walks per node on level j-1.  ``mode1_rel[j]`` accumulates the
    relative standard error of the first sine mode down the stack.
    """
    radii = level_radii(curve, q, core_levels, min_radius)
    a, b = curve.segments()
    stack = wos.LevelStack.empty(radii, a, b, n_nodes)
    S = sine_matrix(n_nodes)

    def contains(p):
        return geometry.side_of(curve, p) == geometry.PLUS

    fld = WosField(stack=stack, contains=contains, samples=gradient_samples or samples,
                   seed=seed, eps_rel=eps_rel, curve=curve)
    for j, R in enumerate(radii):
        if R < 1.0 and geometry.crossing_count(curve, R) != 2:
            raise geometry.ConstructionError(f"level circle r={R:.3e} crosses a notch", "levels")
        alpha, lam = geometry.positive_arc(curve, R)
        stack.alpha[j], stack.lam[j] = alpha, lam
        stack.seg_lo[j], stack.seg_hi[j] = _segment_range(curve, R)
        phi = midpoint_angles(alpha, lam, n_nodes)
        nodes = R * np.exp(1j * phi)
        if j == 0:
            vals = np.maximum(nodes.imag, 0.0)
            se = np.zeros(n_nodes)
        else:
            qid = (np.int64(j) << np.int64(20)) + np.arange(n_nodes, dtype=np.int64)
            vals, se, stuck = wos.estimate_values(stack, nodes, np.full(n_nodes, j - 1), qid,
                                                  seed, samples, eps_rel)
            if stuck.any():
                raise HarmonicError("walks failed to terminate")
        d = S @ vals
        dse = np.sqrt((S**2) @ se**2)
        stack.coeffs[j] = d
        stack.ncoef[j] = n_nodes
        stack.cvc[j] = d[0] / R
        stack.cvb[j] = alpha
        stack.known = j + 1
        fld.node_values.append(vals)
        fld.node_stderr.append(se)
        fld.coeff_stderr.append(dse)
        prev = fld.mode1_rel[-1] if fld.mode1_rel else 0.0
        fld.mode1_rel.append(math.sqrt(prev**2 + (dse[0] / abs(d[0])) ** 2))
    return fld


def j0_proxy(fld: WosField) -> tuple[float, float]:
    """J(0+) = |grad u(0)| = d_1 / R on the deepest level, which lies inside the flat core."""
    j = fld.stack.known - 1
    R = fld.stack.radius[j]
    d1 = fld.stack.coeffs[j, 0]
    return d1 / R, abs(d1 / R) * fld.mode1_rel[j]


def core_series(fld: WosField, j: int) -> tuple[np.ndarray, np.ndarray, float]:
    """(coefficients, stderrs, radius) of level j."""
    return fld.stack.coeffs[j], fld.coeff_stderr[j], float(fld.stack.radius[j])


def symmetric_value(fld: WosField, p, samples: int | None = None):
    """u(p) + u(-p): the two-phase function u + u~ with u~(z) = u(-z)."""
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    m1, s1 = fld.value(p, samples, stream=3)
    m2, s2 = fld.value(-p, samples, stream=4)
    return m1 + m2, np.hypot(s1, s2)
