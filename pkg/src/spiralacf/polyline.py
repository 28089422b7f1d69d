"""Vectorised planar polyline queries: distances, winding, disk clipping.

Points are complex numbers throughout; a polyline is a 1-D complex array of
vertices joined in order.
"""

from __future__ import annotations

import numpy as np


def segment_arrays(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(vertices, dtype=complex)
    return v[:-1], v[1:]


def nearest_on_segments(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance from each point in ``p`` to the segments (a, b), and the foot point."""
    p = np.atleast_1d(np.asarray(p, dtype=complex))[:, None]
    d = b - a
    dd = np.abs(d) ** 2
    t = np.where(dd > 0, ((p - a) * np.conj(d)).real / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    foot = a + t * d
    dist = np.abs(p - foot)
    k = np.argmin(dist, axis=1)
    rows = np.arange(p.shape[0])
    return dist[rows, k], foot[rows, k], k


def distance(vertices: np.ndarray, p) -> np.ndarray:
    a, b = segment_arrays(vertices)
    return nearest_on_segments(p, a, b)[0]


def winding_angle(vertices: np.ndarray, p) -> np.ndarray:
    """Total angle swept by the polyline as seen from each point."""
    p = np.atleast_1d(np.asarray(p, dtype=complex))[:, None]
    v = np.asarray(vertices, dtype=complex)[None, :]
    rel = v - p
    steps = np.angle(rel[:, 1:] / rel[:, :-1])
    return steps.sum(axis=1)


def left_of_open_curve(vertices: np.ndarray, p) -> np.ndarray:
    """Side test for a curve joining two points of a circle centred at 0.

    The curve is closed with the counter-clockwise arc from its last vertex
    back to its first; points strictly inside that loop are "left".  Points
    must lie strictly inside the circle.
    """
    v = np.asarray(vertices, dtype=complex)
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    ang = winding_angle(v, p)
    start, end = v[0], v[-1]
    # seen from inside the disk, the ccw arc end -> start sweeps (0, 2 pi)
    arc = np.angle((start - p) / (end - p)) % (2 * np.pi)
    total = ang + arc
    return np.abs(total) > np.pi


def clip_segment_to_disk(a: complex, b: complex, r: float):
    """Return the part of segment [a, b] inside |z| <= r, or None."""
    d = b - a
    A = abs(d) ** 2
    if A == 0:
        return (a, b) if abs(a) <= r else None
    B = 2 * (a * np.conj(d)).real
    C = abs(a) ** 2 - r * r
    disc = B * B - 4 * A * C
    if disc <= 0:
        return None
    sq = np.sqrt(disc)
    t0 = (-B - sq) / (2 * A)
    t1 = (-B + sq) / (2 * A)
    lo, hi = max(t0, 0.0), min(t1, 1.0)
    if hi <= lo:
        return None
    return a + lo * d, a + hi * d


def circle_crossings(vertices: np.ndarray, r: float) -> np.ndarray:
    """Angles in [0, 2 pi) where the polyline crosses |z| = r, sorted."""
    v = np.asarray(vertices, dtype=complex)
    out = []
    for a, b in zip(v[:-1], v[1:]):
        d = b - a
        A = abs(d) ** 2
        if A == 0:
            continue
        B = 2 * (a * np.conj(d)).real
        C = abs(a) ** 2 - r * r
        disc = B * B - 4 * A * C
        if disc < 0:
            continue
        sq = np.sqrt(disc)
        for t in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            # half-open so a crossing exactly at a shared vertex is counted once
            if 0.0 <= t < 1.0:
                out.append(np.angle(a + t * d) % (2 * np.pi))
    return np.sort(np.array(out))


def second_moment(vertices: np.ndarray, r: float) -> np.ndarray:
    """Exact 2x2 matrix  int_{curve ∩ B_r} x x^T ds  for a polyline."""
    M = np.zeros((2, 2))
    v = np.asarray(vertices, dtype=complex)
    for a, b in zip(v[:-1], v[1:]):
        piece = clip_segment_to_disk(a, b, r)
        if piece is None:
            continue
        p, q = piece
        L = abs(q - p)
        P = np.array([p.real, p.imag])
        Q = np.array([q.real, q.imag])
        M += L / 3.0 * (np.outer(P, P) + 0.5 * (np.outer(P, Q) + np.outer(Q, P)) + np.outer(Q, Q))
    return M
