"""Exponent-diagram arithmetic for the mapping properties of the
averaging operators.

Points live in the unit square with coordinates (1/p, 1/q).  A bounded
L^p -> L^q mapping grants every pair reachable from it by three free
moves: raising 1/q (nesting of L^q spaces over a finite measure),
lowering 1/p (same on the input side), and the adjoint reflection
(1/p, 1/q) -> (1 - 1/q, 1 - 1/p) for self-adjoint kernels.  A bound
granting half-open endpoint segments therefore generates a convex
polygon: the hull of the segment endpoints, their reflections, and
their axis projections.  Endpoint abscissas are open unless they were
clamped at 1, and the hull edges not lying on the closed sides
{1/p = 0} and {1/q = 1} are reached only in the limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

__all__ = [
    "RieszPoint",
    "RieszRegion",
    "SlopedLine",
    "endpoints_main",
    "endpoints_second",
    "sharpness_line_main",
    "sharpness_line_second",
    "in_region",
]

_TOL = 1e-12


@dataclass(frozen=True)
class RieszPoint:
    inv_p: float
    inv_q: float

    def __post_init__(self):
        if not (-_TOL <= self.inv_p <= 1 + _TOL and -_TOL <= self.inv_q <= 1 + _TOL):
            raise ValueError("coordinates must lie in [0, 1]")

    def reflect(self) -> "RieszPoint":
        return RieszPoint(1.0 - self.inv_q, 1.0 - self.inv_p)

    def as_tuple(self):
        return (self.inv_p, self.inv_q)


@dataclass
class RieszRegion:
    vertices: list  # RieszPoint, counterclockwise
    boundary_included: list  # per edge i: vertices[i] -> vertices[i+1]
    open_vertices: list  # RieszPoint excluded from the region
    endpoints: dict  # name -> {"inv_p", "clamped", "included"}
    description: str
    valid: bool

    def to_json_dict(self) -> dict:
        return {
            "vertices": [[v.inv_p, v.inv_q] for v in self.vertices],
            "boundary_included": list(self.boundary_included),
            "open_vertices": [[v.inv_p, v.inv_q] for v in self.open_vertices],
            "endpoints": {k: dict(v) for k, v in self.endpoints.items()},
            "description": self.description,
            "valid": self.valid,
        }


def _clamp_endpoint(u: float):
    """Abscissas beyond 1 are cut at 1; since the granted half-open
    interval then strictly contains 1, the clamped endpoint is closed."""
    if u > 1.0 + _TOL:
        return 1.0, True
    return float(u), False


def _convex_hull(points):
    """Monotone chain; drops collinear points.  Input: (x, y) tuples."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= _TOL:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= _TOL:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _same(a, b):
    return abs(a[0] - b[0]) <= 1e-9 and abs(a[1] - b[1]) <= 1e-9


def _build_region(segments, description: str, valid: bool, endpoints: dict) -> RieszRegion:
    """segments: list of (endpoint (x, y) pair, closed flag) where each
    segment starts at (1/2, 1/2) and the far endpoint carries the flag."""
    if not valid:
        return RieszRegion(vertices=[], boundary_included=[], open_vertices=[],
                           endpoints=endpoints, description=description, valid=False)
    # closed flag per generated point; a point generated both ways stays closed
    flags = {}

    def add(pt, closed):
        key = (round(pt[0], 12), round(pt[1], 12))
        flags[key] = flags.get(key, False) or closed

    add((0.5, 0.5), True)
    add((0.0, 1.0), True)
    for (pt, closed) in segments:
        add(pt, closed)
    for key, closed in list(flags.items()):
        x, y = key
        add((1.0 - y, 1.0 - x), closed)
    for key, closed in list(flags.items()):
        x, y = key
        add((0.0, y), closed)
        add((x, 1.0), closed)

    hull = _convex_hull(flags.keys())
    verts = [RieszPoint(x, y) for (x, y) in hull]
    open_verts = [v for v in verts if not flags.get((round(v.inv_p, 12), round(v.inv_q, 12)), False)]
    included = []
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        on_left = abs(a[0]) <= 1e-9 and abs(b[0]) <= 1e-9
        on_top = abs(a[1] - 1.0) <= 1e-9 and abs(b[1] - 1.0) <= 1e-9
        both_closed = flags.get(a, False) and flags.get(b, False)
        included.append(bool(on_left or on_top or both_closed))
    return RieszRegion(vertices=verts, boundary_included=included,
                       open_vertices=open_verts, endpoints=endpoints,
                       description=description, valid=True)


def endpoints_main(d: int, s: float, alpha: float,
                   with_lower_bound: bool = False) -> RieszRegion:
    """Region granted by the smoothing-exponent bound: L^p -> L^{p'}
    up to (2s+2a-2d+1)/(2s+2a-2d+2), L^p -> L^2 up to (3s+2a-2d)/(2s),
    and optionally L^p -> L^p up to (s+2a-d)/(2a)."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    gap = s - (d - alpha)
    u_dual = (2 * s + 2 * alpha - 2 * d + 1) / (2 * s + 2 * alpha - 2 * d + 2)
    u_l2 = (3 * s + 2 * alpha - 2 * d) / (2 * s)
    u_self = (s + 2 * alpha - d) / (2 * alpha)
    desc = "smoothing-order %g bound, d=%d, s=%g" % (alpha, d, s)
    endpoints = {}
    segments = []
    for name, u, on in (("dual", u_dual, True), ("l2", u_l2, True),
                        ("self", u_self, with_lower_bound)):
        if not on:
            continue
        v, clamped = _clamp_endpoint(u)
        endpoints[name] = {"inv_p": v, "clamped": clamped, "included": clamped}
        pt = {"dual": (v, 1.0 - v), "l2": (v, 0.5), "self": (v, v)}[name]
        segments.append((pt, clamped))
    return _build_region(segments, desc, valid=gap > _TOL, endpoints=endpoints)


def endpoints_second(d: int, s: float, alpha: float) -> RieszRegion:
    """Region granted by the second-kind potential bound: L^p -> L^{p'}
    up to (2s+a-d)/(2s) and L^p -> L^2 up to (3s+2a-2d)/(2s)."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    gap = s - (d - alpha)
    u_dual = (2 * s + alpha - d) / (2 * s)
    u_l2 = (3 * s + 2 * alpha - 2 * d) / (2 * s)
    desc = "direct-pairing bound, alpha=%g, d=%d, s=%g" % (alpha, d, s)
    endpoints = {}
    segments = []
    for name, u in (("dual", u_dual), ("l2", u_l2)):
        v, clamped = _clamp_endpoint(u)
        endpoints[name] = {"inv_p": v, "clamped": clamped, "included": clamped}
        pt = {"dual": (v, 1.0 - v), "l2": (v, 0.5)}[name]
        segments.append((pt, clamped))
    return _build_region(segments, desc, valid=gap > _TOL, endpoints=endpoints)


@dataclass(frozen=True)
class SlopedLine:
    """Constraint 1/p <= intercept + slope * (1/q)."""
    intercept: float
    slope: float

    def max_inv_p(self, inv_q: float) -> float:
        return self.intercept + self.slope * inv_q

    def satisfied(self, pt: RieszPoint, tol: float = 1e-9) -> bool:
        return pt.inv_p <= self.max_inv_p(pt.inv_q) + tol


def sharpness_line_main(d: int, s: float, k_sphere: int):
    """Constraints forced by concentrating mass near a k-sphere:
    the sloped line 1/p <= (s-d+k + (1/q)(s-d+1))/(s-d+k+1) and the
    vertical cutoff 1/p <= (s-d+k)/k."""
    if s <= d - 1:
        raise ValueError("needs s > d-1")
    denom = s - d + k_sphere + 1
    sloped = SlopedLine(intercept=(s - d + k_sphere) / denom,
                        slope=(s - d + 1) / denom)
    vertical = (s - d + k_sphere) / k_sphere
    return sloped, vertical


def sharpness_line_second(d: int, s: float, alpha: float) -> SlopedLine:
    """Constraint forced by concentrating mass near a small ball under
    the truncated-power kernel: 1/p <= (s-d+alpha)/s + 1/q."""
    if s <= d - alpha:
        raise ValueError("needs s > d-alpha")
    return SlopedLine(intercept=(s - d + alpha) / s, slope=1.0)


def in_region(region: RieszRegion, point) -> bool:
    """Convex-polygon membership honoring open vertices and per-edge
    open/closed boundary flags."""
    if not region.valid:
        raise ValueError("region is not valid")
    if isinstance(point, RieszPoint):
        p = point.as_tuple()
    else:
        p = (float(point[0]), float(point[1]))
    hull = [v.as_tuple() for v in region.vertices]
    n = len(hull)
    if n == 0:
        return False
    for v in region.open_vertices:
        if _same(p, v.as_tuple()):
            return False
    on_edges = []
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if cross < -1e-9:
            return False
        if abs(cross) <= 1e-9:
            # on the edge line; confirm it is within the segment box
            if (min(a[0], b[0]) - 1e-9 <= p[0] <= max(a[0], b[0]) + 1e-9
                    and min(a[1], b[1]) - 1e-9 <= p[1] <= max(a[1], b[1]) + 1e-9):
                on_edges.append(i)
            else:
                return False
    if not on_edges:
        return True
    return any(region.boundary_included[i] for i in on_edges)
