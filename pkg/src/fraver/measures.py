"""Discrete Frostman measures and ball-mass machinery.

A measure here is a finite list of weighted atoms in R^d (d <= 3).  The
constructions of interest are Cantor-type measures, Lebesgue samples on
cubes, Dirac masses and Cartesian products of these.  The continuum
objects they approximate satisfy a Frostman bound

    mu[B(x, r)] <= C r^s,

and the point of this module is to *measure* the exponent s from the
atoms themselves (frostman_fit) rather than trust the nominal
construction parameters.  Ball masses are exact sums over atoms; fits
are least squares in log2-log2 coordinates.

Claims about ball masses are only meaningful for radii well above the
atomic resolution; callers should keep radii >= ~10x resolution(mu).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Ball",
    "DiscreteMeasure",
    "FrostmanReport",
    "BallCounter",
    "make_cantor",
    "make_lebesgue_cube",
    "make_dirac",
    "product_measure",
    "translate",
    "rescale",
    "concat",
    "frostman_fit",
    "geometric_radii",
    "default_radii",
    "vitali_cover",
    "balls_pairwise_disjoint",
    "balls_cover_points",
    "save_measure",
    "load_measure",
]


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atomic measure: points (n, dim), nonnegative weights (n,)."""

    dim: int
    points: np.ndarray
    weights: np.ndarray
    label: str = ""
    bounding_box: tuple = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if pts.shape != (len(w), self.dim):
            raise ValueError("points shape %s inconsistent with %d weights in dim %d"
                             % (pts.shape, len(w), self.dim))
        if len(w) == 0:
            raise ValueError("measure needs at least one atom")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(w > 0):
            raise ValueError("total mass must be positive")
        box = self.bounding_box
        if box is None:
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            box = (lo, hi)
        lo = np.asarray(box[0], dtype=float).ravel()
        hi = np.asarray(box[1], dtype=float).ravel()
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            raise ValueError("atoms fall outside the declared bounding box")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bounding_box", (lo, hi))

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    def resolution(self) -> float:
        """Smallest nearest-neighbour distance between distinct atoms."""
        if self.n_atoms == 1:
            return 0.0
        tree = cKDTree(self.points)
        d, _ = tree.query(self.points, k=2)
        return float(d[:, 1].min())

    def to_json_dict(self) -> dict:
        lo, hi = self.bounding_box
        return {
            "dim": self.dim,
            "label": self.label,
            "atoms": [[list(map(float, p)), float(w)]
                      for p, w in zip(self.points, self.weights)],
            "bounding_box": [list(map(float, lo)), list(map(float, hi))],
            "total_mass": self.total_mass,
        }


def save_measure(mu: DiscreteMeasure, path) -> None:
    with open(path, "w") as fh:
        json.dump(mu.to_json_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_measure(path) -> DiscreteMeasure:
    with open(path) as fh:
        d = json.load(fh)
    pts = np.array([a[0] for a in d["atoms"]], dtype=float)
    w = np.array([a[1] for a in d["atoms"]], dtype=float)
    box = d.get("bounding_box")
    box = (np.array(box[0], dtype=float), np.array(box[1], dtype=float)) if box else None
    return DiscreteMeasure(dim=int(d["dim"]), points=pts, weights=w,
                           label=d.get("label", ""), bounding_box=box)


# ---------------------------------------------------------------------------
# constructions


def make_cantor(ratio: float, depth: int, mass: float = 1.0,
                label: str = "") -> DiscreteMeasure:
    """Cantor measure on [0, 1]: 2^depth atoms at the left endpoints of the
    level-`depth` construction intervals, equal weights.

    Each interval of length L splits into two of length ratio*L anchored at
    both ends.  The natural exponent is log 2 / log(1/ratio).
    """
    if not (0 < ratio < 0.5):
        raise ValueError("ratio must lie in (0, 1/2)")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if mass <= 0:
        raise ValueError("mass must be positive")
    left = np.array([0.0])
    length = 1.0
    for _ in range(depth):
        left = np.concatenate([left, left + (1.0 - ratio) * length])
        length *= ratio
    left.sort()
    w = np.full(left.size, mass / left.size)
    return DiscreteMeasure(dim=1, points=left.reshape(-1, 1), weights=w,
                           label=label or f"cantor(r={ratio:g},depth={depth})",
                           bounding_box=(np.zeros(1), np.ones(1)))


def make_lebesgue_cube(dim: int, per_axis: int, side: float = 1.0,
                       mass: float = 1.0, label: str = "") -> DiscreteMeasure:
    """Uniform sample of the cube [0, side]^dim at per_axis^dim cell centres."""
    if per_axis < 1:
        raise ValueError("per_axis must be >= 1")
    if side <= 0 or mass <= 0:
        raise ValueError("side and mass must be positive")
    axis = (np.arange(per_axis) + 0.5) * (side / per_axis)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.full(pts.shape[0], mass / pts.shape[0])
    return DiscreteMeasure(dim=dim, points=pts, weights=w,
                           label=label or f"lebesgue(d={dim},n={per_axis})",
                           bounding_box=(np.zeros(dim), np.full(dim, side)))


def make_dirac(point, mass: float = 1.0, label: str = "dirac") -> DiscreteMeasure:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    return DiscreteMeasure(dim=p.size, points=p.reshape(1, -1),
                           weights=np.array([mass]), label=label,
                           bounding_box=(p.copy(), p.copy()))


def product_measure(a: DiscreteMeasure, b: DiscreteMeasure,
                    label: str = "") -> DiscreteMeasure:
    """Cartesian product; atom count multiplies, Frostman exponents add."""
    dim = a.dim + b.dim
    if dim > 3:
        raise ValueError("product dimension exceeds 3")
    ia, ib = np.meshgrid(np.arange(a.n_atoms), np.arange(b.n_atoms), indexing="ij")
    pts = np.concatenate([a.points[ia.ravel()], b.points[ib.ravel()]], axis=1)
    w = (a.weights[ia.ravel()] * b.weights[ib.ravel()])
    lo = np.concatenate([a.bounding_box[0], b.bounding_box[0]])
    hi = np.concatenate([a.bounding_box[1], b.bounding_box[1]])
    return DiscreteMeasure(dim=dim, points=pts, weights=w,
                           label=label or f"({a.label})x({b.label})",
                           bounding_box=(lo, hi))


def translate(mu: DiscreteMeasure, shift) -> DiscreteMeasure:
    v = np.asarray(shift, dtype=float).ravel()
    return DiscreteMeasure(dim=mu.dim, points=mu.points + v, weights=mu.weights,
                           label=mu.label,
                           bounding_box=(mu.bounding_box[0] + v, mu.bounding_box[1] + v))


def rescale(mu: DiscreteMeasure, factor: float, mass_factor: float = 1.0) -> DiscreteMeasure:
    if factor <= 0 or mass_factor <= 0:
        raise ValueError("factors must be positive")
    return DiscreteMeasure(dim=mu.dim, points=mu.points * factor,
                           weights=mu.weights * mass_factor, label=mu.label,
                           bounding_box=(mu.bounding_box[0] * factor,
                                         mu.bounding_box[1] * factor))


def concat(a: DiscreteMeasure, b: DiscreteMeasure, label: str = "") -> DiscreteMeasure:
    """Disjoint union (sum) of two measures in the same dimension."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    pts = np.concatenate([a.points, b.points], axis=0)
    w = np.concatenate([a.weights, b.weights])
    lo = np.minimum(a.bounding_box[0], b.bounding_box[0])
    hi = np.maximum(a.bounding_box[1], b.bounding_box[1])
    return DiscreteMeasure(dim=a.dim, points=pts, weights=w,
                           label=label or f"{a.label}+{b.label}",
                           bounding_box=(lo, hi))


# ---------------------------------------------------------------------------
# ball masses


class BallCounter:
    """Exact weighted ball masses mu[B(x, r)] (closed balls) for one measure.

    Atoms are grouped by weight value so that counting queries against a
    KD-tree suffice; constructed measures carry only a handful of distinct
    weights.  Falls back to explicit neighbour sums if that assumption
    breaks down.
    """

    _MAX_GROUPS = 32

    def __init__(self, mu: DiscreteMeasure):
        self.mu = mu
        values = np.unique(mu.weights)
        values = values[values > 0]
        if values.size <= self._MAX_GROUPS:
            self._groups = [(float(v), cKDTree(mu.points[mu.weights == v]))
                            for v in values]
            self._tree = None
        else:
            self._groups = None
            keep = mu.weights > 0
            self._tree = cKDTree(mu.points[keep])
            self._w = mu.weights[keep]

    def mass(self, centers, radius: float) -> np.ndarray:
        centers = np.asarray(centers, dtype=float)
        squeeze = centers.ndim == 1
        if squeeze:
            centers = centers.reshape(1, -1)
        out = np.zeros(centers.shape[0])
        if self._groups is not None:
            for w, tree in self._groups:
                out += w * tree.query_ball_point(centers, radius, return_length=True)
        else:
            for i, lst in enumerate(self._tree.query_ball_point(centers, radius)):
                out[i] = self._w[np.asarray(lst, dtype=int)].sum()
        return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Frostman fit


@dataclass
class FrostmanReport:
    s_exponent: float
    c_upper: float
    c_lower: float  # may be None
    radius_range: tuple
    samples: list  # (log2 r, log2 sup-mass) pairs
    fit_r2: float
    unreliable: bool = False

    def to_json_dict(self) -> dict:
        return {
            "s_exponent": self.s_exponent,
            "c_upper": self.c_upper,
            "c_lower": self.c_lower,
            "radius_range": list(self.radius_range),
            "samples": [list(p) for p in self.samples],
            "fit_r2": self.fit_r2,
            "unreliable": self.unreliable,
        }


def geometric_radii(r_min: float, r_max: float, count: int = 12) -> np.ndarray:
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    return np.geomspace(r_min, r_max, count)


def default_radii(mu: DiscreteMeasure, count: int = 12) -> np.ndarray:
    """Geometric radii from ~10x atomic resolution up to a third of the
    support diameter; the range where ball masses reflect the continuum."""
    diam = mu.diameter()
    if diam == 0.0:
        return np.geomspace(0.125, 1.0, count)
    res = mu.resolution()
    r_min = max(10.0 * res, diam * 1e-6)
    r_max = diam / 3.0
    if r_min >= r_max:
        r_min = r_max / 16.0
    return geometric_radii(r_min, r_max, count)


def _line_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares line with an R^2 that treats a constant y as perfect."""
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-24:
        return float(slope), float(intercept), 1.0
    return float(slope), float(intercept), max(0.0, 1.0 - ss_res / ss_tot)


def frostman_fit(mu: DiscreteMeasure, radii=None, max_centers: int = 4096) -> FrostmanReport:
    """Fit s in sup_x mu[B(x, r)] ~ C r^s over the given radii.

    The sup runs over atom centres (a stride subsample above max_centers).
    c_upper bounds mass/r^s from above over the samples; c_lower is the
    matching on-support lower constant.  fit_r2 < 0.9 flags the fit as
    unreliable instead of failing.
    """
    if radii is None:
        radii = default_radii(mu)
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise ValueError("need at least 4 radii")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    radii = np.sort(radii)

    centers = mu.points
    if mu.n_atoms > max_centers:
        stride = int(math.ceil(mu.n_atoms / max_centers))
        centers = mu.points[::stride]
    counter = BallCounter(mu)

    sup_mass = np.empty(radii.size)
    inf_mass = np.empty(radii.size)
    for i, r in enumerate(radii):
        m = counter.mass(centers, float(r))
        sup_mass[i] = m.max()
        inf_mass[i] = m.min()

    x = np.log2(radii)
    y = np.log2(sup_mass)
    slope, _, r2 = _line_fit(x, y)
    s = slope
    c_upper = float(np.max(sup_mass / radii ** s))
    c_lower = float(np.min(inf_mass / radii ** s)) if np.all(inf_mass > 0) else None
    return FrostmanReport(
        s_exponent=float(s),
        c_upper=c_upper,
        c_lower=c_lower,
        radius_range=(float(radii[0]), float(radii[-1])),
        samples=[(float(a), float(b)) for a, b in zip(x, y)],
        fit_r2=float(r2),
        unreliable=bool(r2 < 0.9),
    )


# ---------------------------------------------------------------------------
# Vitali covering


def vitali_cover(mu: DiscreteMeasure, subset, delta_max: float, s: float):
    """Greedy Vitali selection over balls B(x_i, delta_max), i in subset.

    Returns (balls, mass_sum) where balls are pairwise disjoint (strict
    centre-distance > sum of radii), their 5x enlargements cover every
    subset atom, and mass_sum = sum of radius^s over selected balls.
    """
    idx = np.asarray(subset, dtype=int).ravel()
    if idx.size == 0:
        raise ValueError("empty set")
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    pts = mu.points[idx]

    # Candidates share one radius, so the radius-descending order reduces
    # to ascending atom index.
    order = np.argsort(idx, kind="stable")
    tree = cKDTree(pts)
    blocked = np.zeros(idx.size, dtype=bool)
    chosen = []
    for j in order:
        if blocked[j]:
            continue
        chosen.append(j)
        near = tree.query_ball_point(pts[j], 2.0 * delta_max)
        blocked[np.asarray(near, dtype=int)] = True
    balls = [Ball(center=pts[j].copy(), radius=float(delta_max)) for j in chosen]
    mass_sum = float(len(balls) * delta_max ** s)
    return balls, mass_sum


def balls_pairwise_disjoint(balls) -> bool:
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            d = float(np.linalg.norm(balls[i].center - balls[j].center))
            if d <= balls[i].radius + balls[j].radius:
                return False
    return True


def balls_cover_points(balls, points, factor: float = 5.0) -> bool:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    covered = np.zeros(pts.shape[0], dtype=bool)
    for b in balls:
        covered |= np.linalg.norm(pts - b.center, axis=1) <= factor * b.radius
    return bool(covered.all())
