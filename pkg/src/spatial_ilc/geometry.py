"""Virtual tube geometry: a piecewise line/arc centerline with a radius profile.

Arclength ``l`` is the single coordinate used everywhere else in the package.
Closed tracks are periodic in ``l`` with period ``L``; open tracks are defined
on ``[0, L]``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

JOIN_TOL = 1e-9
TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Invalid track construction input."""


class ProjectionError(RuntimeError):
    """A point could not be projected uniquely onto the centerline."""


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, o):  # type: ignore[override]
        return Vec2(self.x + o[0], self.y + o[1])

    def __sub__(self, o):
        return Vec2(self.x - o[0], self.y - o[1])

    def __mul__(self, s):  # type: ignore[override]
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def dot(self, o) -> float:
        return self.x * o[0] + self.y * o[1]

    def cross(self, o) -> float:
        return self.x * o[1] - self.y * o[0]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def unit(self) -> "Vec2":
        n = math.hypot(self.x, self.y)
        if n == 0.0:
            raise GeometryError("cannot normalise a zero vector")
        return Vec2(self.x / n, self.y / n)


@dataclass(frozen=True)
class LineSegment:
    start: Vec2
    end: Vec2

    kind = "line"

    def __post_init__(self):
        if not (self.end - self.start).norm() > 0.0:
            raise GeometryError("line segment must have positive length")

    @cached_property
    def length(self) -> float:
        return (self.end - self.start).norm()

    @cached_property
    def direction(self) -> Vec2:
        return (self.end - self.start).unit()

    @property
    def signed_curvature(self) -> float:
        return 0.0

    def point(self, s: float) -> Vec2:
        d = self.direction
        return Vec2(self.start.x + d.x * s, self.start.y + d.y * s)

    def tangent(self, s: float) -> Vec2:
        return self.direction

    def closest(self, p: Vec2, lo: float, hi: float) -> tuple[float, float]:
        """Closest local arclength in ``[lo, hi]`` and its squared distance."""
        d = self.direction
        s = (p[0] - self.start.x) * d.x + (p[1] - self.start.y) * d.y
        s = min(max(s, lo), hi)
        qx = self.start.x + d.x * s - p[0]
        qy = self.start.y + d.y * s - p[1]
        return s, qx * qx + qy * qy


@dataclass(frozen=True)
class ArcSegment:
    center: Vec2
    radius: float
    start_angle: float
    sweep: float  # signed; positive is counter-clockwise

    kind = "arc"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise GeometryError(f"arc radius must be positive, got {self.radius}")
        if self.sweep == 0.0 or abs(self.sweep) > TWO_PI + 1e-12:
            raise GeometryError(f"arc sweep must be nonzero and at most 2*pi, got {self.sweep}")

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    @property
    def turn(self) -> float:
        return 1.0 if self.sweep > 0 else -1.0

    @property
    def signed_curvature(self) -> float:
        return self.turn / self.radius

    def _angle(self, s: float) -> float:
        return self.start_angle + self.turn * s / self.radius

    def point(self, s: float) -> Vec2:
        a = self._angle(s)
        return Vec2(self.center.x + self.radius * math.cos(a), self.center.y + self.radius * math.sin(a))

    def tangent(self, s: float) -> Vec2:
        a = self._angle(s)
        return Vec2(-self.turn * math.sin(a), self.turn * math.cos(a))

    def closest(self, p: Vec2, lo: float, hi: float) -> tuple[float, float]:
        dx = p[0] - self.center.x
        dy = p[1] - self.center.y
        rho = math.hypot(dx, dy)
        if rho < 1e-12:
            raise ProjectionError("point coincides with an arc centre")
        # angle from the arc start, measured in the sweep direction, in [0, 2pi)
        phi = (self.turn * (math.atan2(dy, dx) - self.start_angle)) % TWO_PI
        s_free = phi * self.radius
        circ = TWO_PI * self.radius
        best_s, best_d2 = None, math.inf
        for cand in (s_free, s_free - circ):
            if lo <= cand <= hi:
                best_s, best_d2 = cand, (rho - self.radius) ** 2
                break
        if best_s is None:
            for cand in (lo, hi):
                q = self.point(cand)
                d2 = (q.x - p[0]) ** 2 + (q.y - p[1]) ** 2
                if d2 < best_d2:
                    best_s, best_d2 = cand, d2
        return best_s, best_d2


Segment = LineSegment | ArcSegment


class GeneratorCurve:
    """Ordered, C1-continuous chain of line and arc segments.

    Arclength lookups at a join resolve to the later segment.
    """

    def __init__(self, segments: Sequence[Segment], closed: bool = False):
        if not segments:
            raise GeometryError("a curve needs at least one segment")
        self.segments = tuple(segments)
        self.closed = closed
        lengths = [seg.length for seg in self.segments]
        self.starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        self.cumulative_lengths = np.cumsum(lengths)
        self.length = float(self.cumulative_lengths[-1])
        self._starts_list = self.starts.tolist()
        self._check_continuity()

    def _check_continuity(self):
        pairs = list(zip(self.segments[:-1], self.segments[1:]))
        if self.closed:
            pairs.append((self.segments[-1], self.segments[0]))
        for i, (a, b) in enumerate(pairs):
            pa, pb = a.point(a.length), b.point(0.0)
            ta, tb = a.tangent(a.length), b.tangent(0.0)
            scale = max(1.0, abs(pa.x), abs(pa.y))
            if (pa - pb).norm() > JOIN_TOL * scale or (ta - tb).norm() > JOIN_TOL * scale:
                raise GeometryError(f"segments {i} and {(i + 1) % len(self.segments)} are not C1-continuous")

    def wrap(self, l: float) -> float:
        if self.closed:
            return l % self.length
        if l < 0.0 or l > self.length:
            raise GeometryError(f"arclength {l} outside [0, {self.length}]")
        return l

    def locate(self, l: float) -> tuple[int, float]:
        l = self.wrap(l)
        i = bisect.bisect_right(self._starts_list, l) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return i, l - self._starts_list[i]

    def point(self, l: float) -> Vec2:
        i, s = self.locate(l)
        return self.segments[i].point(s)

    def tangent(self, l: float) -> Vec2:
        i, s = self.locate(l)
        return self.segments[i].tangent(s)

    def signed_curvature(self, l: float) -> float:
        i, _ = self.locate(l)
        return self.segments[i].signed_curvature

    def curvature(self, l: float) -> float:
        return abs(self.signed_curvature(l))

    def sample(self, ls) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised ``(points, tangents, signed curvatures)`` at arclengths ``ls``."""
        ls = np.asarray(ls, dtype=float)
        if self.closed:
            ls = np.mod(ls, self.length)
        elif ls.size and (ls.min() < 0.0 or ls.max() > self.length):
            raise GeometryError("arclength outside curve domain")
        idx = np.clip(np.searchsorted(self.starts, ls, side="right") - 1, 0, len(self.segments) - 1)
        pts = np.empty(ls.shape + (2,))
        tans = np.empty(ls.shape + (2,))
        kap = np.empty(ls.shape)
        for i, seg in enumerate(self.segments):
            sel = idx == i
            if not sel.any():
                continue
            s = ls[sel] - self.starts[i]
            if seg.kind == "line":
                d = seg.direction
                pts[sel, 0] = seg.start.x + d.x * s
                pts[sel, 1] = seg.start.y + d.y * s
                tans[sel] = d
                kap[sel] = 0.0
            else:
                a = seg.start_angle + seg.turn * s / seg.radius
                pts[sel, 0] = seg.center.x + seg.radius * np.cos(a)
                pts[sel, 1] = seg.center.y + seg.radius * np.sin(a)
                tans[sel, 0] = -seg.turn * np.sin(a)
                tans[sel, 1] = seg.turn * np.cos(a)
                kap[sel] = seg.signed_curvature
        return pts, tans, kap


@dataclass(frozen=True)
class RadiusProfile:
    """Piecewise-linear tube radius ``r_t(l)``; constant beyond the end breakpoints."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise GeometryError("radius profile needs at least one breakpoint")
        ls = [b[0] for b in self.breakpoints]
        if any(b <= a for a, b in zip(ls[:-1], ls[1:])):
            raise GeometryError("radius breakpoints must have strictly increasing arclength")
        for l, r in self.breakpoints:
            if not (math.isfinite(r) and r > 0.0):
                raise GeometryError(f"tube radius must be positive, got {r} at l={l}")
        object.__setattr__(self, "_ls", np.array(ls, dtype=float))
        object.__setattr__(self, "_rs", np.array([b[1] for b in self.breakpoints], dtype=float))

    @classmethod
    def constant(cls, r: float) -> "RadiusProfile":
        return cls(((0.0, float(r)),))

    @property
    def max_radius(self) -> float:
        return float(self._rs.max())

    @property
    def min_radius(self) -> float:
        return float(self._rs.min())

    def __call__(self, l):
        if len(self.breakpoints) == 1:
            r = self.breakpoints[0][1]
            return r if np.isscalar(l) else np.full(np.shape(l), r)
        out = np.interp(l, self._ls, self._rs)
        return float(out) if np.isscalar(l) else out


class Projection(NamedTuple):
    l: float
    m: Vec2
    e_p: Vec2  # m - p
    tangent: Vec2
    curvature: float
    radius: float
    signed_curvature: float


@dataclass(frozen=True)
class VirtualTube:
    curve: GeneratorCurve
    radius_profile: RadiusProfile
    waypoints: tuple[Vec2, ...] = ()
    name: str = "track"
    corner_radius: float = 0.0
    max_radius: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "max_radius", self.radius_profile.max_radius)

    @property
    def length(self) -> float:
        return self.curve.length

    @property
    def closed(self) -> bool:
        return self.curve.closed

    def radius(self, l: float) -> float:
        return self.radius_profile(self.curve.wrap(l))


def _fillet(prev: Vec2, corner: Vec2, nxt: Vec2, radius: float):
    """Tangent distance and arc replacing the corner at ``corner`` (None if straight)."""
    d_in = (corner - prev).unit()
    d_out = (nxt - corner).unit()
    turn = math.atan2(d_in.cross(d_out), d_in.dot(d_out))
    if abs(turn) < 1e-12:
        return 0.0, None, d_in, d_out
    if abs(abs(turn) - math.pi) < 1e-9:
        raise GeometryError("path reverses direction at a waypoint")
    t = radius * math.tan(abs(turn) / 2.0)
    a = corner - d_in * t
    sign = 1.0 if turn > 0 else -1.0
    center = a + Vec2(-d_in.y, d_in.x) * (sign * radius)
    start_angle = math.atan2(a.y - center.y, a.x - center.x)
    return t, ArcSegment(center, radius, start_angle, turn), d_in, d_out


def build_tube(
    waypoints: Sequence[Sequence[float]],
    corner_radius: float,
    tube_radius: float | RadiusProfile | Sequence[tuple[float, float]],
    closed: bool = False,
    name: str = "track",
) -> VirtualTube:
    """Straight lines between waypoints with circular fillets at the corners.

    Closed tracks treat every waypoint as a corner and start at the midpoint of
    the straight part of the first edge. ``tube_radius`` is either a constant or
    a list of ``(l, r_t)`` breakpoints.
    """
    pts = [Vec2(float(p[0]), float(p[1])) for p in waypoints]
    if closed and len(pts) > 1 and (pts[0] - pts[-1]).norm() < 1e-12:
        pts = pts[:-1]
    if len(pts) < (3 if closed else 2):
        raise GeometryError("not enough waypoints")
    if not corner_radius > 0.0:
        raise GeometryError(f"corner_radius must be positive, got {corner_radius}")
    n = len(pts)
    for i in range(n if closed else n - 1):
        if (pts[(i + 1) % n] - pts[i]).norm() == 0.0:
            raise GeometryError(f"waypoints {i} and {(i + 1) % n} coincide")

    corners = range(n) if closed else range(1, n - 1)
    tdist = [0.0] * n
    arcs: list = [None] * n
    for i in corners:
        tdist[i], arcs[i], _, _ = _fillet(pts[i - 1], pts[i], pts[(i + 1) % n], corner_radius)

    # straight remainder of each edge i -> i+1
    edges = []
    for i in range(n if closed else n - 1):
        j = (i + 1) % n
        d = (pts[j] - pts[i]).unit()
        a = pts[i] + d * tdist[i]
        b = pts[j] - d * tdist[j]
        room = (pts[j] - pts[i]).norm() - tdist[i] - tdist[j]
        if room < -1e-9:
            raise GeometryError(f"fillets overlap on the edge ending at waypoint {j}; reduce corner_radius")
        edges.append((a, b, room))

    segs: list = []

    def add_line(a, b):
        if (b - a).norm() > 1e-9:
            segs.append(LineSegment(a, b))

    if closed:
        a0, b0, _ = edges[0]
        mid = (a0 + b0) * 0.5
        add_line(mid, b0)
        for i in range(1, n):
            if arcs[i] is not None:
                segs.append(arcs[i])
            a, b, _ = edges[i]
            add_line(a, b)
        if arcs[0] is not None:
            segs.append(arcs[0])
        add_line(a0, mid)
    else:
        for i in range(n - 1):
            if arcs[i] is not None:
                segs.append(arcs[i])
            a, b, _ = edges[i]
            add_line(a, b)

    curve = GeneratorCurve(segs, closed=closed)
    return VirtualTube(curve, _radius_profile(tube_radius), tuple(pts), name=name, corner_radius=corner_radius)


def circle_tube(center, radius: float, tube_radius, name: str = "circle") -> VirtualTube:
    """Closed counter-clockwise circle starting at the rightmost point."""
    c = Vec2(float(center[0]), float(center[1]))
    arc = ArcSegment(c, float(radius), 0.0, TWO_PI)
    curve = GeneratorCurve([arc], closed=True)
    return VirtualTube(curve, _radius_profile(tube_radius), (curve.point(0.0),), name=name, corner_radius=float(radius))


def _radius_profile(value) -> RadiusProfile:
    if isinstance(value, RadiusProfile):
        return value
    if isinstance(value, (int, float)):
        return RadiusProfile.constant(float(value))
    return RadiusProfile(tuple((float(l), float(r)) for l, r in value))


def _candidates(curve: GeneratorCurve, lo: float, hi: float):
    """Yield ``(segment index, offset, s_lo, s_hi)`` covering the window ``[lo, hi]``."""
    L = curve.length
    if curve.closed:
        k0 = math.floor(lo / L)
        k1 = math.floor(hi / L)
        shifts = [k * L for k in range(k0, k1 + 1)]
    else:
        lo, hi = max(lo, 0.0), min(hi, L)
        shifts = [0.0]
    starts = curve._starts_list
    for shift in shifts:
        a, b = lo - shift, hi - shift
        i0 = max(bisect.bisect_right(starts, max(a, 0.0)) - 1, 0)
        for i in range(i0, len(curve.segments)):
            s0 = starts[i]
            if s0 > b:
                break
            seg = curve.segments[i]
            s_lo = max(a - s0, 0.0)
            s_hi = min(b - s0, seg.length)
            if s_lo <= s_hi:
                yield i, shift + s0, s_lo, s_hi


def project(tube: VirtualTube, p, hint_l: float = 0.0, window: float = 5.0) -> Projection:
    """Closest centerline point to ``p`` within ``hint_l +/- window``.

    Returns ``l`` wrapped into ``[0, L)`` on closed tracks. Raises
    :class:`ProjectionError` when the point is too far from the curve or the
    minimum sits on a window edge (the true foot point lies elsewhere).
    """
    curve = tube.curve
    lo, hi = hint_l - window, hint_l + window
    best = None
    for i, offset, s_lo, s_hi in _candidates(curve, lo, hi):
        s, d2 = curve.segments[i].closest(p, s_lo, s_hi)
        if best is None or d2 < best[0]:
            best = (d2, i, offset + s, s)
    if best is None:
        raise ProjectionError(f"empty projection window around l={hint_l}")
    d2, i, l_unwrapped, s = best
    dist = math.sqrt(d2)
    if dist > 2.0 * tube.max_radius:
        raise ProjectionError(f"point {tuple(p)} is {dist:.3f} m from the centerline near l={hint_l:.3f}")
    edge_lo = lo if curve.closed else max(lo, 0.0)
    edge_hi = hi if curve.closed else min(hi, curve.length)
    at_edge = (abs(l_unwrapped - edge_lo) < 1e-12 and (curve.closed or edge_lo > 0.0)) or (
        abs(l_unwrapped - edge_hi) < 1e-12 and (curve.closed or edge_hi < curve.length)
    )
    if at_edge and dist > 1e-9:
        raise ProjectionError(f"foot point left the search window around l={hint_l:.3f}")
    seg = curve.segments[i]
    m = seg.point(s)
    t = seg.tangent(s)
    k = seg.signed_curvature
    l = l_unwrapped % curve.length if curve.closed else l_unwrapped
    if curve.closed and l >= curve.length:
        l = 0.0
    return Projection(
        l=l,
        m=m,
        e_p=Vec2(m.x - p[0], m.y - p[1]),
        tangent=t,
        curvature=abs(k),
        radius=tube.radius_profile(l),
        signed_curvature=k,
    )


def frame_at(tube: VirtualTube, l: float) -> tuple[Vec2, Vec2, float, float]:
    """``(point, unit tangent, curvature, tube radius)`` at arclength ``l``."""
    L = tube.length
    if not (0.0 <= l <= L):
        raise GeometryError(f"arclength {l} outside [0, {L}]")
    i, s = tube.curve.locate(l)
    seg = tube.curve.segments[i]
    lw = tube.curve.wrap(l)
    return seg.point(s), seg.tangent(s), abs(seg.signed_curvature), tube.radius_profile(lw)


def contains(tube: VirtualTube, p, hint_l: float = 0.0, window: float = 5.0) -> bool:
    proj = project(tube, p, hint_l, window)
    return proj.e_p.norm() <= proj.radius
