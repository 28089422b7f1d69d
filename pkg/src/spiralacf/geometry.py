"""The spiral interface: theta-turn splicing, side queries and phase areas.

The interface is a single polyline from -e^{i b0} to e^{i b0} on the unit
circle, symmetric under z -> -z.  The positive phase lies to the left of the
direction of traversal.  Its innermost piece (the "core") is always a
straight segment through the origin, which is where the next turn goes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from . import polyline
from .config import DEFAULT_M, LEVEL_RATIO, VERTEX_TOL
from .conformal import SCMapSpec, check_theta, solve_parameter_problem

PLUS, MINUS, BOUNDARY = 1, -1, 0


class GeometryError(ValueError):
    pass


class ConstructionError(RuntimeError):
    """A stage could not be built; ``criterion`` names what failed."""

    def __init__(self, message: str, criterion: str = "", stage: int | None = None):
        super().__init__(message)
        self.criterion = criterion
        self.stage = stage


@dataclass(frozen=True)
class Annulus:
    """On outer >= |z| >= inner the interface is the line through 0 at ``angle``."""

    outer: float
    inner: float
    angle: float


@dataclass(frozen=True)
class TurnSpec:
    theta: float
    rho: float
    m_value: float
    rotation: float
    r_select: float | None = None

    @property
    def scale(self) -> float:
        """The factor 2M/rho taking B_rho onto B_2M."""
        return 2.0 * self.m_value / self.rho


@dataclass(frozen=True)
class InterfaceCurve:
    vertices: np.ndarray
    core_index: int
    core_half_length: float
    core_angle: float
    annuli: tuple[Annulus, ...]
    turns: tuple[TurnSpec, ...] = ()

    def __post_init__(self):
        v = np.array(self.vertices, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def stages(self) -> int:
        return len(self.turns)

    @property
    def cumulative_angle(self) -> float:
        return -self.core_angle

    def core_segment(self) -> tuple[complex, complex]:
        return self.vertices[self.core_index], self.vertices[self.core_index + 1]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return polyline.segment_arrays(self.vertices)

    def segments_in_disk(self, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Segments meeting the closed disk of radius r (for local distance queries)."""
        a, b = self.segments()
        keep = _segment_origin_distance(a, b) <= r * (1 + 1e-12)
        return a[keep], b[keep]

    def to_csv(self) -> str:
        lines = ["index,x,y"]
        for i, v in enumerate(self.vertices):
            lines.append(f"{i},{v.real:.17g},{v.imag:.17g}")
        return "\n".join(lines) + "\n"


def _segment_origin_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    dd = np.abs(d) ** 2
    t = np.clip(np.where(dd > 0, (-a * np.conj(d)).real / np.where(dd > 0, dd, 1), 0), 0, 1)
    return np.abs(a + t * d)


def diameter(angle: float = 0.0) -> InterfaceCurve:
    """The interface of u0 = y^+ rotated by ``angle``: a straight diameter."""
    e = complex(math.cos(angle), math.sin(angle))
    return InterfaceCurve(
        vertices=np.array([-e, e]),
        core_index=0,
        core_half_length=1.0,
        core_angle=angle,
        annuli=(Annulus(1.0, 0.0, angle),),
    )


@lru_cache(maxsize=64)
def turn_domain(theta: float, m_value: float) -> SCMapSpec:
    return solve_parameter_problem(theta, m_value)


def apply_theta_turn(curve: InterfaceCurve, theta: float, rho: float,
                     m_value: float = DEFAULT_M, r_select: float | None = None) -> InterfaceCurve:
    """Replace the core inside B_rho by the boundary of Omega_{theta,M} shrunk from B_2M.

    The copy is rotated so that its far rays continue the existing core line;
    the new core is the middle side, turned clockwise by theta.
    """
    ell, beta, k = curve.core_half_length, curve.core_angle, curve.core_index
    if not (0.0 < rho < ell):
        raise GeometryError(f"rho={rho} must lie in (0, {ell}) where the interface is straight")
    if theta == 0.0:
        return curve
    check_theta(theta)
    spec = turn_domain(float(theta), float(m_value))
    V = spec.vertices()
    c = rho / (2.0 * m_value) * complex(math.cos(beta), math.sin(beta))
    piece = c * V
    v = curve.vertices
    new_vertices = np.concatenate([v[: k + 1], piece, v[k + 1:]])
    middle = V[3] - V[2]
    core_half = float(0.5 * abs(middle) * abs(c))
    new_angle = beta + float(np.angle(middle))
    annuli = list(curve.annuli)
    last = annuli[-1]
    # the notch sits just outside rho/2; the old line is intact beyond it
    annuli[-1] = replace(last, inner=float(np.max(np.abs(piece[:2]))))
    annuli.append(Annulus(core_half, 0.0, new_angle))
    return InterfaceCurve(
        vertices=new_vertices,
        core_index=k + 3,
        core_half_length=core_half,
        core_angle=new_angle,
        annuli=tuple(annuli),
        turns=curve.turns + (TurnSpec(float(theta), float(rho), float(m_value), beta, r_select),),
    )


def step_band(turn: TurnSpec) -> tuple[float, float]:
    """Radii where circles cross the notch of a turn more than once per side."""
    V = turn_domain(turn.theta, turn.m_value).vertices()
    s = abs(V[1].imag)
    lo = 0.5 * turn.rho
    return lo, lo * math.sqrt(1.0 + (s / turn.m_value) ** 2)


def level_midpoint_below(x: float, q: float = LEVEL_RATIO) -> float:
    """Largest 2 q^{m+1/2} (m integer) not exceeding x: keeps rho/2 between level radii."""
    m = math.ceil(math.log(x / 2.0) / math.log(q) - 0.5)
    val = 2.0 * q ** (m + 0.5)
    while val > x:
        m += 1
        val = 2.0 * q ** (m + 0.5)
    return val


# ---------------------------------------------------------------------------
# construction


class RadiusSchedule(Protocol):
    def select(self, stage: int, curve: InterfaceCurve, theta: float) -> tuple[float, float]:
        """Return (r, rho) for the turn applied at ``stage``."""
        ...


@dataclass(frozen=True)
class GeometricSchedule:
    """rho_k = shrink * (core half-length), snapped so rho/2 sits between level radii."""

    first: float = 0.5
    shrink: float = 1e-2
    q: float = LEVEL_RATIO

    def select(self, stage: int, curve: InterfaceCurve, theta: float) -> tuple[float, float]:
        target = self.first if stage == 1 else self.shrink * curve.core_half_length
        rho = level_midpoint_below(min(target, 0.999 * curve.core_half_length), self.q)
        return min(curve.core_half_length, rho / math.sqrt(self.q)), rho


def theta_schedule(n0: int, stages: int) -> list[float]:
    return [1.0 / (k + n0) for k in range(1, stages + 1)]


def build_spiral(n0: int, stages: int, schedule: RadiusSchedule | None = None,
                 m_value: float = DEFAULT_M) -> InterfaceCurve:
    """Apply turns theta_k = 1/(k + n0), k = 1..stages, starting from the diameter."""
    if stages < 0:
        raise GeometryError("stages must be nonnegative")
    thetas = theta_schedule(n0, stages)
    if thetas:
        check_theta(thetas[0])
    schedule = schedule or GeometricSchedule()
    curve = diameter()
    for k, th in enumerate(thetas, start=1):
        r, rho = schedule.select(k, curve, th)
        curve = apply_theta_turn(curve, th, rho, m_value, r_select=r)
    return curve


# ---------------------------------------------------------------------------
# queries


def side_of(curve: InterfaceCurve, p) -> np.ndarray:
    """PLUS/MINUS labels (BOUNDARY within vertex tolerance) for points with |p| < 1."""
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    d = polyline.distance(curve.vertices, p)
    left = polyline.left_of_open_curve(curve.vertices, p)
    lab = np.where(left, PLUS, MINUS)
    return np.where(d <= VERTEX_TOL * np.maximum(np.abs(p), 1e-300), BOUNDARY, lab)


def signed_distance(curve: InterfaceCurve, p) -> tuple[float, int]:
    """Exact distance from p to the interface and the phase containing p."""
    p = complex(p)
    if abs(p) > 1.0 + 1e-12:
        raise GeometryError("point outside the unit ball")
    d = float(polyline.distance(curve.vertices, p)[0])
    if d == 0.0:
        return 0.0, BOUNDARY
    side = PLUS if polyline.left_of_open_curve(curve.vertices, p)[0] else MINUS
    return d, side


def _clipped_pieces(curve: InterfaceCurve, r: float) -> list[list[complex]]:
    """Maximal runs of the curve inside the closed disk, in traversal order."""
    pieces, cur = [], []
    v = curve.vertices
    for a, b in zip(v[:-1], v[1:]):
        clip = polyline.clip_segment_to_disk(a, b, r)
        if clip is None:
            if cur:
                pieces.append(cur)
                cur = []
            continue
        p, q = clip
        if cur and abs(cur[-1] - p) <= 1e-15 * max(r, 1e-300):
            cur.append(q)
        else:
            if cur:
                pieces.append(cur)
            cur = [p, q]
        if abs(q - b) > 1e-15 * max(r, 1e-300):
            pieces.append(cur)
            cur = []
    if cur:
        pieces.append(cur)
    return pieces


def phase_arcs(curve: InterfaceCurve, r: float) -> list[tuple[float, float, int]]:
    """Arcs (start angle, angular length, side) of the circle |z| = r cut by the curve."""
    ends = []
    for piece in _clipped_pieces(curve, r):
        for z in (piece[0], piece[-1]):
            if abs(abs(z) - r) <= 1e-9 * r:
                ends.append(float(np.angle(z) % (2 * math.pi)))
    ends.sort()
    ends = [e for i, e in enumerate(ends) if i == 0 or e - ends[i - 1] > 1e-12]
    if not ends:
        raise GeometryError(f"the circle r={r} does not meet the interface")
    arcs = []
    probe = r * (1.0 - 1e-9) if r >= 1.0 else r
    for i, a in enumerate(ends):
        b = ends[(i + 1) % len(ends)]
        length = (b - a) % (2 * math.pi) or 2 * math.pi
        mid = probe * complex(math.cos(a + 0.5 * length), math.sin(a + 0.5 * length))
        side = PLUS if polyline.left_of_open_curve(curve.vertices, mid)[0] else MINUS
        arcs.append((a, length, side))
    return arcs


def positive_arc(curve: InterfaceCurve, r: float) -> tuple[float, float]:
    """(alpha, Lambda) of the single positive arc of |z| = r; error if it is not unique."""
    plus = [(a, L) for a, L, s in phase_arcs(curve, r) if s == PLUS]
    if len(plus) != 1:
        raise GeometryError(f"circle r={r} meets the positive phase in {len(plus)} arcs")
    return plus[0]


def phase_area(curve: InterfaceCurve, r: float, side: int) -> float:
    """|B_r ∩ phase| by Green's theorem over the clipped curve and circle arcs."""
    twice = 0.0
    for piece in _clipped_pieces(curve, r):
        pts = np.asarray(piece)
        if side == MINUS:
            pts = pts[::-1]
        twice += float(np.sum((np.conj(pts[:-1]) * pts[1:]).imag))
    for a, length, s in phase_arcs(curve, r):
        if s == side:
            twice += r * r * length
    return 0.5 * twice


def density_ratio(curve: InterfaceCurve, r: float, side: int = PLUS) -> float:
    if not (0.0 < r <= 1.0):
        raise GeometryError("radius must lie in (0, 1]")
    return phase_area(curve, r, side) / (math.pi * r * r)


def ray_deviation(curve: InterfaceCurve, annulus: Annulus) -> float:
    """Max distance from the curve inside the annulus to the ideal line at ``annulus.angle``."""
    e = complex(math.cos(annulus.angle), math.sin(annulus.angle))
    worst = 0.0
    for piece in _clipped_pieces(curve, annulus.outer):
        for p, q in zip(piece[:-1], piece[1:]):
            for t in np.linspace(0.0, 1.0, 5):
                z = p + t * (q - p)
                if abs(z) >= annulus.inner * (1 + 1e-12):
                    worst = max(worst, abs((z * np.conj(e)).imag))
    return worst


def lipschitz_constant(curve: InterfaceCurve, r: float) -> tuple[float, float]:
    """Smallest Lipschitz constant of the curve in B_2r \\ B_r as a graph over some line.

    Returns (constant, frame angle).  Segment directions are taken mod pi; the
    optimal frame bisects the shortest arc covering all of them.
    """
    dirs = []
    for piece in _clipped_pieces(curve, 2.0 * r):
        for p, q in zip(piece[:-1], piece[1:]):
            if abs(q - p) > 0 and (abs(p) > r or abs(q) > r):
                dirs.append(float(np.angle(q - p) % math.pi))
    if not dirs:
        raise GeometryError("no interface in the annulus")
    d = np.sort(np.array(dirs))
    gaps = np.diff(np.concatenate([d, [d[0] + math.pi]]))
    i = int(np.argmax(gaps))
    cover = math.pi - gaps[i]
    start = d[(i + 1) % d.size]
    frame = (start + 0.5 * cover) % math.pi
    return math.tan(0.5 * cover), frame


def antipodal_defect(curve: InterfaceCurve) -> float:
    """max over vertices v of dist(-v, curve)."""
    return float(np.max(polyline.distance(curve.vertices, -curve.vertices)))


def crossing_count(curve: InterfaceCurve, r: float) -> int:
    return int(polyline.circle_crossings(curve.vertices, r).size)
