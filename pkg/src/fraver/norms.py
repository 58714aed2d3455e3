"""Empirical operator norms and scaling-law fits.

Operator norms between L^p(mu_in) and L^q(mu_out) are estimated from
below by a deterministic family of test functions (dyadic ball and slab
indicators, seeded random signs, the constant), and for p = q = 2 also
by power iteration.  The kernels in this package are even, so the
operators are self-adjoint on L^2(mu) up to discretisation and power
iteration on A itself converges to the norm; the iteration tracks the
Rayleigh quotient of A*A, which is nondecreasing along iterates.

Scaling laws are fitted by least squares in log2 coordinates.  A claim
"quantity ~ 2^{slope * abscissa}" gets verdict "consistent" when the
fitted slope matches the prediction within the declared tolerance; for
one-sided claims (upper bounds) only the upward violation counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .measures import DiscreteMeasure

__all__ = [
    "NormEstimate",
    "ScalingReport",
    "lp_norm",
    "build_test_family",
    "power_iteration",
    "op_norm_estimate",
    "scaling_fit",
    "restricted_weak_check",
]


def lp_norm(mu: DiscreteMeasure, f, p: float) -> float:
    """L^p(mu) norm of atom values f; p may be math.inf."""
    f = np.asarray(f)
    if f.shape != (mu.n_atoms,):
        raise ValueError("f must give one value per atom")
    if p != math.inf and p < 1:
        raise ValueError("p must be >= 1")
    w = mu.weights
    if p == math.inf:
        live = w > 0
        return float(np.abs(f[live]).max()) if live.any() else 0.0
    return float(np.sum(w * np.abs(f) ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# operator norm estimation


@dataclass
class NormEstimate:
    p: float
    q: float
    value: float
    method: str  # "test-family" | "power-iteration"
    witness: str = ""

    def to_json_dict(self) -> dict:
        enc = lambda v: "inf" if v == math.inf else v
        return {"p": enc(self.p), "q": enc(self.q), "value": self.value,
                "method": self.method, "witness": self.witness}


def build_test_family(mu: DiscreteMeasure, seed: int = 0, n_centers: int = 4,
                      n_radii: int = 4, n_random: int = 2):
    """Deterministic test functions on the atoms of mu.

    Yields (name, values) pairs: the constant, dyadic-radius ball
    indicators around stride-sampled atoms, axis slabs of dyadic
    thickness, and seeded random sign vectors.
    """
    n = mu.n_atoms
    yield "const", np.ones(n)

    lo, hi = mu.bounding_box
    diam = mu.diameter() or 1.0
    res = mu.resolution()
    r_max = diam / 4.0
    r_min = max(4.0 * res, r_max / 2.0 ** (n_radii - 1)) if res > 0 else r_max / 8.0
    stride = max(1, n // n_centers)
    centers = mu.points[::stride][:n_centers]
    radii = np.geomspace(max(r_min, 1e-12), r_max, n_radii)
    for ci, c in enumerate(centers):
        dist = np.linalg.norm(mu.points - c, axis=1)
        for r in radii:
            ind = (dist <= r).astype(float)
            if ind.any():
                yield f"ball(center={ci},r={r:.3g})", ind

    for axis in range(mu.dim):
        span = float(hi[axis] - lo[axis]) or 1.0
        for frac in (0.5, 0.25, 0.125):
            cut = lo[axis] + span * frac
            ind = (mu.points[:, axis] <= cut).astype(float)
            if ind.any():
                yield f"slab(axis={axis},frac={frac})", ind

    rng = np.random.default_rng(seed)
    for i in range(n_random):
        yield f"signs({i})", rng.choice([-1.0, 1.0], size=n)


def power_iteration(apply_op, mu_in: DiscreteMeasure, mu_out: DiscreteMeasure,
                    iters: int = 24, tol: float = 1e-4, seed: int = 0):
    """Estimate the L^2(mu_in) -> L^2(mu_out) norm by power iteration.

    Returns (value, rayleigh_history) where rayleigh_history[n] is
    ||A v_n|| / ||v_n||; for self-adjoint A this sequence is
    nondecreasing and converges to the operator norm.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mu_in.n_atoms)
    v[mu_in.weights == 0] = 0.0
    nv = lp_norm(mu_in, v, 2)
    if nv == 0:
        raise ValueError("degenerate start vector")
    v = v / nv
    history = []
    for _ in range(iters):
        u = np.asarray(apply_op(v))
        sigma = lp_norm(mu_out, u, 2)
        history.append(sigma)
        if sigma == 0.0:
            break
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= tol * sigma:
            break
        if mu_in is not mu_out:
            break  # cannot re-feed the output; single-shot estimate only
        v = u / sigma
    return (history[-1] if history else 0.0), history


def op_norm_estimate(apply_op, mu_in: DiscreteMeasure, mu_out: DiscreteMeasure,
                     p: float, q: float, family=None, budget: int = 64,
                     seed: int = 0) -> NormEstimate:
    """Lower empirical estimate of ||A||_{L^p(mu_in) -> L^q(mu_out)}.

    apply_op maps atom values on mu_in to values of A(f mu_in) on the
    atoms of mu_out.  All family ratios are exact lower bounds; for
    p = q = 2 power iteration is run as well and the best value wins.
    """
    if family is None:
        family = build_test_family(mu_in, seed=seed)
    best = -1.0
    witness = ""
    tried = 0
    for name, f in family:
        if tried >= budget:
            break
        tried += 1
        denom = lp_norm(mu_in, f, p)
        if denom == 0.0:
            continue
        ratio = lp_norm(mu_out, np.asarray(apply_op(f)), q) / denom
        if ratio > best:
            best, witness = ratio, name
    if best < 0:
        raise ValueError("all-zero test family")
    method = "test-family"
    if p == 2 and q == 2:
        pi_value, _ = power_iteration(apply_op, mu_in, mu_out, seed=seed)
        if pi_value > best:
            best, method, witness = pi_value, "power-iteration", "power-iteration"
    return NormEstimate(p=p, q=q, value=float(best), method=method, witness=witness)


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class ScalingReport:
    slope: float
    intercept: float
    r2: float
    samples: list  # (abscissa, log2 quantity)
    abscissa_kind: str  # "log2_eps" | "k_index" | "log2_R"
    predicted_slope: float = None
    verdict: str = "inconclusive"  # "consistent" | "violated" | "inconclusive"
    tolerance: float = 0.3
    one_sided: bool = False
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        d = {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "samples": [list(map(float, s)) for s in self.samples],
            "abscissa_kind": self.abscissa_kind,
            "predicted_slope": self.predicted_slope,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "one_sided": self.one_sided,
        }
        if self.extras:
            d["extras"] = {k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else v)
                           for k, v in self.extras.items()}
        return d


_ABSCISSA_KINDS = ("log2_eps", "k_index", "log2_R")


def scaling_fit(samples, predicted_slope=None, tolerance: float = 0.3,
                one_sided: bool = False, abscissa_kind: str = "k_index") -> ScalingReport:
    """Least-squares slope of log2 quantity against a dyadic abscissa.

    samples: (abscissa, log2 quantity) pairs; needs >= 4 of them spanning
    >= 3 dyadic steps.  predicted_slope None leaves the verdict
    "inconclusive".
    """
    if abscissa_kind not in _ABSCISSA_KINDS:
        raise ValueError(f"unknown abscissa_kind {abscissa_kind!r}")
    pts = [(float(a), float(b)) for a, b in samples]
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    finite = np.isfinite(ys)
    degenerate = not finite.all()
    xs, ys = xs[finite], ys[finite]
    if xs.size < 4 or (xs.max() - xs.min()) < 3.0 - 1e-9:
        raise ValueError("too few samples: need >= 4 spanning >= 3 dyadic steps")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-24 else max(0.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot)
    if predicted_slope is None or degenerate:
        verdict = "inconclusive"
    elif one_sided:
        verdict = "consistent" if slope <= predicted_slope + tolerance else "violated"
    else:
        verdict = "consistent" if abs(slope - predicted_slope) <= tolerance else "violated"
    rep = ScalingReport(slope=float(slope), intercept=float(intercept), r2=r2,
                        samples=pts, abscissa_kind=abscissa_kind,
                        predicted_slope=predicted_slope, verdict=verdict,
                        tolerance=tolerance, one_sided=one_sided)
    if degenerate:
        rep.extras["degenerate"] = True
    return rep


def restricted_weak_check(op_spec, mu: DiscreteMeasure, subset, k_range, grid,
                          s: float = None, tolerance: float = 0.3) -> ScalingReport:
    """Restricted weak-type (1,1) scaling of the dyadic pieces.

    Computes ||A_k chi_E||_{L^1(mu)} / mu(E) for each k and fits the log2
    ratio against k; the one-sided prediction is d - s.  s defaults to
    the measured Frostman exponent of mu.
    """
    from . import operators  # deferred; operators depends on this module
    from .measures import frostman_fit

    idx = np.asarray(subset, dtype=int).ravel()
    if idx.size == 0:
        raise ValueError("empty set")
    chi = np.zeros(mu.n_atoms)
    chi[idx] = 1.0
    mass = float(mu.weights[idx].sum())
    if mass == 0.0:
        raise ValueError("subset carries no mass")
    if s is None:
        s = frostman_fit(mu).s_exponent
    samples = []
    for k in k_range:
        vals = operators.apply_Ak(op_spec, mu, chi, int(k), grid, mu.points)
        ratio = lp_norm(mu, vals, 1) / mass
        samples.append((float(k), np.log2(ratio) if ratio > 0 else -np.inf))
    rep = scaling_fit(samples, predicted_slope=float(mu.dim - s),
                      tolerance=tolerance, one_sided=True, abscissa_kind="k_index")
    rep.extras["s_fit"] = float(s)
    rep.extras["subset_mass"] = mass
    return rep
