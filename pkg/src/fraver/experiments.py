"""End-to-end experiment runners.

Each runner builds a measure from a named recipe, drives an averaging
operator over a dyadic epsilon grid or a piece index range, fits the
observed log2 quantities against predicted exponents, and returns an
ExperimentReport.  Predictions always use exponents measured from the
constructed measure (ball-mass slopes, Frostman fits), never the nominal
construction parameters.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.fft as sfft

from .measures import (
    DiscreteMeasure,
    balls_cover_points,
    balls_pairwise_disjoint,
    frostman_fit,
    make_cantor,
    make_lebesgue_cube,
    product_measure,
    translate,
    vitali_cover,
)
from .norms import (
    ScalingReport,
    lp_norm,
    power_iteration,
    restricted_weak_check,
    scaling_fit,
)
from .operators import (
    OperatorSpec,
    apply_Ak,
    apply_operator,
    disjointness_decay,
    kernel_multiplier,
)
from .spectral import DyadicProfile, GridSpec, l2_average_ratio

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "build_measure",
    "default_config",
    "run_lemma_cover",
    "run_lemma_disjoint",
    "run_lemma_l2avg",
    "run_lemma_suite",
    "run_piece_norms",
    "run_sharpness_main",
    "run_sharpness_second",
    "run_threshold_s",
]

_RECIPES = ("cantor2", "cantor_lebesgue", "cantor_dirac_lebesgue")
_LOG2_3 = math.log(2.0) / math.log(3.0)

# Hard cap on recipe size; past this the direct sums stop being desk-scale.
_MAX_ATOMS = 2 ** 21


def _is_pow2(x: float) -> bool:
    if x <= 0:
        return False
    return abs(math.log2(x) - round(math.log2(x))) <= 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs shared by all runners; per-kind defaults via default_config."""

    name: str = "experiment"
    d: int = 2
    s_target: float = 2.0 * _LOG2_3
    alpha: float = 0.5
    k_sphere: int = 1
    eps_list: tuple = tuple(2.0 ** -e for e in range(3, 9))
    k_range: tuple = (2, 3, 4, 5, 6, 7)
    grid_per_axis: int = 2048
    grid_side: float = 2.5
    grid_origin: tuple = (-0.75, -0.75)
    measure_recipe: str = "cantor2"
    p: float = 2.0
    q: float = 2.0
    pairs: tuple = ()
    seed: int = 0
    tolerance: float = 0.3
    depth: int = None
    epsilon: float = 2.0 ** -6
    probe_size: int = 4096
    subset_box: tuple = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.measure_recipe not in _RECIPES:
            raise ValueError(f"unknown measure recipe {self.measure_recipe!r}")
        eps = tuple(float(e) for e in self.eps_list)
        if len(eps) == 0:
            raise ValueError("epsilon grid is empty")
        if any(not _is_pow2(e) for e in eps) or any(
            b >= a for a, b in zip(eps, eps[1:])
        ):
            raise ValueError("epsilon grid must be strictly decreasing powers of two")
        object.__setattr__(self, "eps_list", eps)
        object.__setattr__(self, "k_range", tuple(int(k) for k in self.k_range))
        object.__setattr__(self, "grid_origin", tuple(float(o) for o in self.grid_origin))
        object.__setattr__(
            self, "pairs", tuple((float(p), float(q)) for p, q in self.pairs)
        )
        if self.subset_box is not None:
            lo, hi = self.subset_box
            object.__setattr__(
                self,
                "subset_box",
                (tuple(float(v) for v in lo), tuple(float(v) for v in hi)),
            )
        if not 0 <= self.k_sphere <= self.d - 1:
            raise ValueError("k_sphere must lie in [0, d-1]")
        if not 0.0 < self.alpha < self.d:
            raise ValueError("alpha must lie in (0, d)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        for pv, qv in ((self.p, self.q),) + self.pairs:
            if pv < 1.0 or qv < 1.0:
                raise ValueError("exponents p, q must be >= 1")
        if len(self.grid_origin) != self.d:
            raise ValueError("grid origin length must match d")
        if self.probe_size < 64:
            raise ValueError("probe_size must be >= 64")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict, base: "ExperimentConfig" = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        base = base if base is not None else cls()
        return replace(base, **data)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "s_target": self.s_target,
            "alpha": self.alpha,
            "k_sphere": self.k_sphere,
            "eps_list": list(self.eps_list),
            "k_range": list(self.k_range),
            "grid_per_axis": self.grid_per_axis,
            "grid_side": self.grid_side,
            "grid_origin": list(self.grid_origin),
            "measure_recipe": self.measure_recipe,
            "p": self.p,
            "q": self.q,
            "pairs": [list(pq) for pq in self.pairs],
            "seed": self.seed,
            "tolerance": self.tolerance,
            "depth": self.depth,
            "epsilon": self.epsilon,
            "probe_size": self.probe_size,
            "subset_box": None
            if self.subset_box is None
            else [list(self.subset_box[0]), list(self.subset_box[1])],
        }

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            dim=self.d,
            per_axis=self.grid_per_axis,
            side=self.grid_side,
            origin=self.grid_origin,
        )


def default_config(kind: str) -> ExperimentConfig:
    """Shipped defaults for each runner/CLI subcommand."""
    if kind == "sharp-main":
        return ExperimentConfig(
            name="sharp-main",
            p=20.0 / 3.0,
            q=5.0 / 3.0,
            pairs=((2.0, 5.0),),
        )
    if kind == "sharp-threshold":
        return ExperimentConfig(
            name="sharp-threshold",
            measure_recipe="cantor_lebesgue",
            s_target=1.0 + _LOG2_3,
            eps_list=tuple(2.0 ** -e for e in range(10, 17)),
            probe_size=8192,
        )
    if kind == "sharp-second":
        return ExperimentConfig(
            name="sharp-second",
            alpha=1.0,
            pairs=((4.0, 2.0), (2.0, 4.0), (4.0, 4.0)),
            tolerance=0.15,
        )
    if kind == "pieces":
        return ExperimentConfig(
            name="pieces",
            eps_list=tuple(2.0 ** -e for e in range(3, 7)),
            epsilon=2.0 ** -6,
        )
    if kind == "lemma-l2avg":
        return ExperimentConfig(
            name="lemma-l2avg",
            eps_list=tuple(2.0 ** -e for e in range(3, 7)),
            epsilon=2.0 ** -6,
        )
    if kind == "lemma-disjoint":
        return ExperimentConfig(
            name="lemma-disjoint",
            eps_list=tuple(2.0 ** -e for e in range(3, 6)),
            epsilon=2.0 ** -5,
            k_range=(0, 1, 2, 3, 4, 5, 6),
            grid_per_axis=1024,
            grid_side=3.0,
            grid_origin=(-1.0, -1.0),
        )
    if kind == "lemma-cover":
        return ExperimentConfig(
            name="lemma-cover",
            eps_list=tuple(2.0 ** -e for e in range(3, 7)),
            epsilon=2.0 ** -6,
        )
    if kind == "diagram":
        return ExperimentConfig(
            name=kind,
            s_target=1.75,
            eps_list=tuple(2.0 ** -e for e in range(3, 7)),
            epsilon=2.0 ** -6,
        )
    if kind == "measure":
        return ExperimentConfig(
            name=kind,
            eps_list=tuple(2.0 ** -e for e in range(3, 7)),
            epsilon=2.0 ** -6,
        )
    raise ValueError(f"unknown experiment kind {kind!r}")


# ---------------------------------------------------------------------------
# measure recipes


def _rule_epsilon(config: ExperimentConfig) -> float:
    return min(min(config.eps_list), config.epsilon)


def _resolve_depth(config: ExperimentConfig, ratio: float) -> int:
    """Cantor depth from the resolution rule atom scale <= eps_min / 10."""
    target = _rule_epsilon(config) / 10.0
    needed = int(math.ceil(math.log(target) / math.log(ratio) - 1e-9))
    needed = max(needed, 1)
    if config.depth is not None:
        if ratio ** config.depth > target * (1 + 1e-12):
            raise ValueError(
                "underresolved: depth %d leaves atom scale %.3g above eps_min/10 = %.3g"
                % (config.depth, ratio ** config.depth, target)
            )
        return config.depth
    return needed


def _cantor_ratio(s_line: float) -> float:
    """Contraction ratio of the two-branch Cantor set with dimension s_line."""
    if not 0.0 < s_line < 1.0:
        raise ValueError("line dimension must lie in (0, 1); got %.4g" % s_line)
    return 2.0 ** (-1.0 / s_line)


def _shifted_cantor_line(ratio: float, depth: int):
    """Atoms of (D - 1) union D on [-1, 1]: each point has a partner at
    horizontal distance exactly one, which is what produces internal
    tangencies of unit spheres."""
    base = make_cantor(ratio, depth)
    pts = base.points[:, 0]
    c = np.concatenate([pts - 1.0, pts])
    w = np.concatenate([base.weights, base.weights]) / 2.0
    return c, w


def build_measure(config: ExperimentConfig):
    """Construct the recipe measure; returns (measure, info).

    info carries the recipe parameters and, for product recipes, the
    one-dimensional Cantor factor so runners can evaluate ball masses in
    closed form instead of discretizing the Lebesgue factor.
    """
    recipe = config.measure_recipe
    if config.d != 2:
        raise ValueError("measure recipes support d = 2 only")
    if recipe == "cantor2":
        s_line = config.s_target / 2.0
        ratio = _cantor_ratio(s_line)
        depth = _resolve_depth(config, ratio)
        if (2 ** depth) ** 2 > _MAX_ATOMS:
            raise ValueError("recipe too large: %d atoms" % (2 ** depth) ** 2)
        line = make_cantor(ratio, depth)
        mu = product_measure(line, line, label=f"cantor2[r={ratio:.4g},depth={depth}]")
        info = {"recipe": recipe, "ratio": ratio, "depth": depth,
                "atom_scale": ratio ** depth}
        return mu, info
    if recipe == "cantor_lebesgue":
        s_line = config.s_target - (config.d - 1)
        ratio = _cantor_ratio(s_line)
        depth = _resolve_depth(config, ratio)
        c, w = _shifted_cantor_line(ratio, depth)
        # The returned atoms discretize the Lebesgue factor for fitting and
        # probing only; threshold ball masses use the exact factor.
        m = max(16, min(256, _MAX_ATOMS // max(c.size, 1)))
        lattice = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
        px, py = np.meshgrid(c, lattice, indexing="ij")
        pw = (w[:, None] * np.full(m, 1.0 / m)[None, :]).ravel()
        mu = DiscreteMeasure(
            dim=2,
            points=np.stack([px.ravel(), py.ravel()], axis=-1),
            weights=pw,
            label=f"cantor_lebesgue[r={ratio:.4g},depth={depth}]",
        )
        info = {"recipe": recipe, "ratio": ratio, "depth": depth,
                "atom_scale": ratio ** depth, "cantor_atoms": c, "cantor_weights": w}
        return mu, info
    # cantor_dirac_lebesgue: Cantor x Dirac line plus a disjoint Lebesgue
    # blob straddling distance one from that line.  One lattice row must
    # land exactly at unit distance, otherwise the tangent scaling cuts
    # off once eps drops below the lattice spacing.
    s_line = config.s_target
    ratio = _cantor_ratio(s_line)
    depth = _resolve_depth(config, ratio)
    c, w = _shifted_cantor_line(ratio, depth)
    line = DiscreteMeasure(
        dim=2,
        points=np.stack([c, np.zeros_like(c)], axis=-1),
        weights=w * 0.8,
        label="cantor_dirac",
    )
    m_blob = 32
    side = 0.2
    cell = side / m_blob
    offset_y = 1.0 - (m_blob // 2 + 0.5) * cell
    blob = translate(
        make_lebesgue_cube(2, m_blob, side=side, mass=0.2),
        (-0.5 * side, offset_y),
    )
    pts = np.concatenate([line.points, blob.points], axis=0)
    ws = np.concatenate([line.weights, blob.weights])
    mu = DiscreteMeasure(
        dim=2, points=pts, weights=ws,
        label=f"cantor_dirac_lebesgue[r={ratio:.4g},depth={depth}]",
    )
    info = {"recipe": recipe, "ratio": ratio, "depth": depth,
            "atom_scale": ratio ** depth, "cantor_atoms": c, "cantor_weights": w,
            "n_line": line.n_atoms, "glued_blob": True}
    return mu, info


# ---------------------------------------------------------------------------
# report container


@dataclass
class ExperimentReport:
    name: str
    kind: str
    config: dict
    measured_exponents: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)  # name -> ScalingReport
    checks: dict = field(default_factory=dict)  # name -> bool
    tables: dict = field(default_factory=dict)  # name -> plain json dict
    flags: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    primary: str = ""
    runtime_seconds: float = 0.0
    artifacts: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        verdicts = [rep.verdict for rep in self.claims.values()]
        if any(v == "violated" for v in verdicts) or any(
            val is False for val in self.checks.values()
        ):
            return "violated"
        if any(v == "consistent" for v in verdicts) or (
            self.checks and all(self.checks.values())
        ):
            return "consistent"
        return "inconclusive"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "config": self.config,
            "measured_exponents": self.measured_exponents,
            "claims": {k: v.to_json_dict() for k, v in self.claims.items()},
            "checks": dict(self.checks),
            "tables": dict(self.tables),
            "flags": list(self.flags),
            "errors": list(self.errors),
            "primary": self.primary,
            "verdict": self.verdict,
            "runtime_seconds": self.runtime_seconds,
            "artifacts": list(self.artifacts),
        }


def _new_report(kind: str, config: ExperimentConfig) -> ExperimentReport:
    return ExperimentReport(name=config.name, kind=kind, config=config.to_json_dict())


def _fit_or_error(report: ExperimentReport, key: str, samples, **kw):
    """scaling_fit that downgrades an unusable sample set to an error entry."""
    try:
        rep = scaling_fit(samples, **kw)
    except ValueError as exc:
        report.errors.append(f"{key}: {exc}")
        rep = ScalingReport(
            slope=0.0, intercept=0.0, r2=0.0,
            samples=[(float(a), float(b)) for a, b in samples],
            abscissa_kind=kw.get("abscissa_kind", "k_index"),
            predicted_slope=kw.get("predicted_slope"), verdict="inconclusive",
            tolerance=kw.get("tolerance", 0.3),
            one_sided=kw.get("one_sided", False),
            extras={"degenerate": True},
        )
    report.claims[key] = rep
    return rep


def _log2_samples(abscissas, values):
    out = []
    for a, v in zip(abscissas, values):
        out.append((float(a), math.log2(v) if v > 0 else -math.inf))
    return out


# ---------------------------------------------------------------------------
# blow-up family over the thickened sphere


def run_sharpness_main(config: ExperimentConfig) -> ExperimentReport:
    """Ratio protocol for the sphere-average operator.

    f_eps is the indicator of a ball of radius eps/4 at the origin (times
    the unit interval in the unused coordinates); the fitted exponent of
    ||A_eps f_eps||_q / ||f_eps||_p against eps is compared to
    -1 + a (1 - 1/p) + b / q with a, b the measured ball and annulus
    mass exponents.
    """
    t0 = time.time()
    report = _new_report("sharp-main", config)
    if config.k_sphere < 1:
        raise ValueError("sphere average needs k_sphere >= 1")
    mu, info = build_measure(config)
    report.tables["measure"] = {
        "label": mu.label, "n_atoms": mu.n_atoms, "ratio": info["ratio"],
        "depth": info["depth"],
    }

    kk = config.k_sphere + 1
    r_head = np.linalg.norm(mu.points[:, :kk], axis=1)
    pairs = ((config.p, config.q),) + config.pairs
    ball_mass, zone_mass = [], []
    ratio_samples = {pq: [] for pq in pairs}
    for eps in config.eps_list:
        ball = r_head <= eps / 4.0
        zone = np.abs(r_head - 1.0) <= eps / 4.0
        mb = float(mu.weights[ball].sum())
        mz = float(mu.weights[zone].sum())
        ball_mass.append(mb)
        zone_mass.append(mz)
        if mb == 0.0 or mz == 0.0:
            report.flags.append("degenerate")
            report.errors.append(
                "degenerate measure: zero mass in ball or annulus at eps=%.3g" % eps
            )
            for pq in pairs:
                ratio_samples[pq].append((math.log2(eps), -math.inf))
            continue
        op = OperatorSpec.annulus(config.d, config.k_sphere, eps)
        vals = apply_operator(op, mu, ball.astype(float), mu.points, method="direct")
        for (p, q) in pairs:
            num = lp_norm(mu, vals, q)
            den = lp_norm(mu, ball.astype(float), p)
            val = num / den if den > 0 else 0.0
            ratio_samples[(p, q)].append(
                (math.log2(eps), math.log2(val) if val > 0 else -math.inf)
            )

    log_eps = [math.log2(e) for e in config.eps_list]
    a_rep = _fit_or_error(report, "ball_mass", _log2_samples(log_eps, ball_mass),
                          abscissa_kind="log2_eps")
    b_rep = _fit_or_error(report, "annulus_mass", _log2_samples(log_eps, zone_mass),
                          abscissa_kind="log2_eps")
    a, b = a_rep.slope, b_rep.slope
    fr = frostman_fit(mu)
    report.measured_exponents = {
        "a_ball": a, "b_annulus": b, "s_fit": fr.s_exponent,
    }

    grad = math.hypot(a, b)
    for (p, q) in pairs:
        e_pred = -1.0 + a * (1.0 - 1.0 / p) + b / q
        key = f"ratio_p{p:g}_q{q:g}"
        rep = _fit_or_error(
            report, key, ratio_samples[(p, q)],
            predicted_slope=e_pred, tolerance=config.tolerance,
            one_sided=False, abscissa_kind="log2_eps",
        )
        rep.extras.update({
            "p": p, "q": q, "e_pred": e_pred,
            "side": "inside" if e_pred >= 0 else "outside",
            "line_distance": abs(e_pred) / grad if grad > 0 else math.inf,
        })
        if not report.primary:
            report.primary = key
    report.runtime_seconds = time.time() - t0
    return report


# ---------------------------------------------------------------------------
# tangency threshold


def _product_ball_mass(px, py, radius, c, w, chunk=512):
    """mu[B(x, r)] for mu = (Cantor line) x (normalized Lebesgue on [-1, 1]),
    exact in the Lebesgue factor."""
    out = np.empty(px.size)
    for i in range(0, px.size, chunk):
        sl = slice(i, i + chunk)
        dx2 = (px[sl, None] - c[None, :]) ** 2
        h = np.sqrt(np.clip(radius * radius - dx2, 0.0, None))
        lo = np.maximum(py[sl, None] - h, -1.0)
        hi = np.minimum(py[sl, None] + h, 1.0)
        seg = np.clip(hi - lo, 0.0, None)
        seg[h == 0.0] = 0.0
        out[sl] = (seg * w[None, :]).sum(axis=1) / 2.0
    return out


def _atom_ball_mass(probes, radius, points, weights, chunk=512):
    out = np.empty(probes.shape[0])
    for i in range(0, probes.shape[0], chunk):
        sl = slice(i, i + chunk)
        d2 = ((probes[sl, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        out[sl] = (weights[None, :] * (d2 <= radius * radius)).sum(axis=1)
    return out


def _product_frostman_slope(probes, c, w, atom_scale):
    """Frostman exponent of the Cantor x Lebesgue product from the exact
    ball-mass form; the discretized echo flattens below its own lattice
    spacing, so the fit must not rely on it."""
    radii = np.geomspace(max(10.0 * atom_scale, 1e-7), 0.9, 12)
    sups = [
        float(_product_ball_mass(probes[:, 0], probes[:, 1], r, c, w).max())
        for r in radii
    ]
    xs = np.log2(radii)
    ys = np.array([math.log2(v) if v > 0 else -math.inf for v in sups])
    keep = np.isfinite(ys)
    return float(np.polyfit(xs[keep], ys[keep], 1)[0])


def run_threshold_s(config: ExperimentConfig) -> ExperimentReport:
    """Uniform-boundedness threshold of A_eps(1 mu) on shift-compatible
    products.

    The sup and the mu-median of A_eps(1 mu) over a probe sample are
    fitted against eps; both are compared to min(0, s - d + k/2), the
    bounded regime above the threshold dimension d - k/2 and the
    tangency blow-up rate below it.
    """
    t0 = time.time()
    report = _new_report("sharp-threshold", config)
    if config.k_sphere < 1:
        raise ValueError("tangency threshold needs k_sphere >= 1")
    if config.measure_recipe == "cantor2":
        raise ValueError("tangency threshold needs a shift-compatible recipe")
    mu, info = build_measure(config)
    c, w = info["cantor_atoms"], info["cantor_weights"]
    dirac = config.measure_recipe == "cantor_dirac_lebesgue"
    report.tables["measure"] = {
        "label": mu.label, "n_atoms": mu.n_atoms, "ratio": info["ratio"],
        "depth": info["depth"],
    }
    if dirac:
        report.flags.append("glued-blob")

    rng = np.random.default_rng(config.seed)
    if dirac:
        # Tangency to the Dirac line is probed from the blob, whose lower
        # edge sits at distance one from it.
        blob = mu.points[:, 1] > 0.5
        probes, pw = mu.points[blob], mu.weights[blob]
        line = DiscreteMeasure(dim=2, points=mu.points[~blob],
                               weights=mu.weights[~blob] / mu.weights[~blob].sum(),
                               label="line-part")
        s_line = frostman_fit(line).s_exponent
        slope_pred = min(0.0, (s_line - config.d + 2.0) / 2.0 - 1.0)
        report.measured_exponents = {"s_line": s_line}
    else:
        m = 16
        lattice = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
        gx, gy = np.meshgrid(c, lattice, indexing="ij")
        gw = (w[:, None] * np.full(m, 1.0 / m)[None, :]).ravel()
        probes = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        pw = gw
        if probes.shape[0] > config.probe_size:
            idx = rng.choice(probes.shape[0], config.probe_size, replace=False)
            probes, pw = probes[idx], pw[idx]
        s_fit = _product_frostman_slope(probes[: min(2048, probes.shape[0])],
                                        c, w, info["atom_scale"])
        slope_pred = min(0.0, s_fit - config.d + config.k_sphere / 2.0)
        report.measured_exponents = {
            "s_fit": s_fit, "threshold": config.d - config.k_sphere / 2.0,
        }

    sup_samples, med_samples = [], []
    for eps in config.eps_list:
        r_out, r_in = 1.0 + eps / 2.0, 1.0 - eps / 2.0
        if dirac:
            outer = _atom_ball_mass(probes, r_out, mu.points, mu.weights)
            inner = _atom_ball_mass(probes, r_in, mu.points, mu.weights)
        else:
            outer = _product_ball_mass(probes[:, 0], probes[:, 1], r_out, c, w)
            inner = _product_ball_mass(probes[:, 0], probes[:, 1], r_in, c, w)
        vals = (outer - inner) / eps
        order = np.argsort(vals)
        cum = np.cumsum(pw[order])
        med = float(vals[order][np.searchsorted(cum / cum[-1], 0.5)])
        sup = float(vals.max())
        sup_samples.append((math.log2(eps), math.log2(sup) if sup > 0 else -math.inf))
        med_samples.append((math.log2(eps), math.log2(med) if med > 0 else -math.inf))

    sup_rep = _fit_or_error(
        report, "sup_value", sup_samples, predicted_slope=slope_pred,
        tolerance=config.tolerance, one_sided=False, abscissa_kind="log2_eps",
    )
    med_rep = _fit_or_error(
        report, "median_value", med_samples, predicted_slope=slope_pred,
        tolerance=config.tolerance, one_sided=False, abscissa_kind="log2_eps",
    )
    sup_rep.extras["probe_count"] = int(probes.shape[0])
    report.measured_exponents["sup_slope"] = sup_rep.slope
    report.measured_exponents["median_slope"] = med_rep.slope
    report.primary = "sup_value"
    report.runtime_seconds = time.time() - t0
    return report


# ---------------------------------------------------------------------------
# fractional-average sharpness


def run_sharpness_second(config: ExperimentConfig) -> ExperimentReport:
    """Ratio protocol for the truncated fractional average.

    f_eps is the indicator of B(0, eps); the fitted ratio exponent is
    compared to a - d + alpha + a/q - a/p with a the measured ball-mass
    exponent at the origin.
    """
    t0 = time.time()
    report = _new_report("sharp-second", config)
    mu, info = build_measure(config)
    report.tables["measure"] = {
        "label": mu.label, "n_atoms": mu.n_atoms, "ratio": info["ratio"],
        "depth": info["depth"],
    }
    r_norm = np.linalg.norm(mu.points, axis=1)
    pairs = ((config.p, config.q),) + config.pairs
    ball_mass = []
    ratio_samples = {pq: [] for pq in pairs}
    for eps in config.eps_list:
        ball = r_norm <= eps
        mb = float(mu.weights[ball].sum())
        ball_mass.append(mb)
        if mb == 0.0:
            report.flags.append("degenerate")
            report.errors.append(
                "degenerate input: f_eps vanishes mu-a.e. at eps=%.3g" % eps
            )
            for pq in pairs:
                ratio_samples[pq].append((math.log2(eps), -math.inf))
            continue
        op = OperatorSpec.riesz(config.d, config.alpha, eps)
        vals = apply_operator(op, mu, ball.astype(float), mu.points, method="direct")
        for (p, q) in pairs:
            num = lp_norm(mu, vals, q)
            den = lp_norm(mu, ball.astype(float), p)
            val = num / den if den > 0 else 0.0
            ratio_samples[(p, q)].append(
                (math.log2(eps), math.log2(val) if val > 0 else -math.inf)
            )

    log_eps = [math.log2(e) for e in config.eps_list]
    a_rep = _fit_or_error(report, "ball_mass", _log2_samples(log_eps, ball_mass),
                          abscissa_kind="log2_eps")
    a = a_rep.slope
    fr = frostman_fit(mu)
    report.measured_exponents = {"a_ball": a, "s_fit": fr.s_exponent}
    for (p, q) in pairs:
        e_pred = a - config.d + config.alpha + a / q - a / p
        key = f"ratio_p{p:g}_q{q:g}"
        rep = _fit_or_error(
            report, key, ratio_samples[(p, q)],
            predicted_slope=e_pred, tolerance=config.tolerance,
            one_sided=False, abscissa_kind="log2_eps",
        )
        rep.extras.update({"p": p, "q": q, "e_pred": e_pred})
        if not report.primary:
            report.primary = key
    report.runtime_seconds = time.time() - t0
    return report


# ---------------------------------------------------------------------------
# dyadic piece norms


def run_piece_norms(config: ExperimentConfig) -> ExperimentReport:
    """Norm growth of the frequency pieces A_k at a fixed thickening.

    Fits log2 of the estimated piece norms against k and compares
    one-sidedly: L2->L2 against d - s - alpha, L1->Linf against 1,
    L1->L2 against d - s/2 - alpha, and the restricted weak L1 ratio
    against d - s, all with measured s.
    """
    t0 = time.time()
    report = _new_report("pieces", config)
    mu, info = build_measure(config)
    grid = config.grid_spec()
    eps = config.epsilon
    op = OperatorSpec.annulus(config.d, config.k_sphere, eps)
    profile = DyadicProfile.for_grid(grid)
    fr = frostman_fit(mu)
    s_fit = fr.s_exponent
    alpha = config.alpha
    report.tables["measure"] = {
        "label": mu.label, "n_atoms": mu.n_atoms, "depth": info["depth"],
    }
    report.measured_exponents = {"s_fit": s_fit, "alpha": alpha, "epsilon": eps}

    rng = np.random.default_rng(config.seed)
    n_sample = min(32, mu.n_atoms)
    sample = rng.choice(mu.n_atoms, n_sample, replace=False)
    # Nearest-grid indices; piece kernels are smooth at scale 2^-k >= 4h,
    # so rounded differences estimate sup and L2 row norms faithfully.
    g_idx = np.rint((mu.points - np.asarray(grid.origin)[None, :]) / grid.h
                    ).astype(int) % grid.per_axis
    mult = kernel_multiplier(op, grid)

    l22, l1inf, l12 = [], [], []
    degenerate = True
    for k in config.k_range:
        sigma, _ = power_iteration(
            lambda v, kk=k: apply_Ak(op, mu, v, kk, grid, mu.points),
            mu, mu, iters=20, seed=config.seed + k,
        )
        piece = np.real(sfft.ifftn(mult * profile.bump(k, grid.freq_norms())))
        rows = np.abs(piece[tuple((g_idx[:, None, :] - g_idx[sample][None, :, :])
                                  .transpose(2, 0, 1) % grid.per_axis)])
        sup_val = float(rows.max()) if rows.size else 0.0
        l2_val = float(np.sqrt((mu.weights[:, None] * rows ** 2).sum(axis=0)).max())
        if sigma > 0 or sup_val > 0:
            degenerate = False
        l22.append(sigma)
        l1inf.append(sup_val)
        l12.append(l2_val)

    ks = list(config.k_range)
    _fit_or_error(report, "l2_to_l2", _log2_samples(ks, l22),
                  predicted_slope=config.d - s_fit - alpha,
                  tolerance=config.tolerance, one_sided=True)
    _fit_or_error(report, "l1_to_linf", _log2_samples(ks, l1inf),
                  predicted_slope=1.0, tolerance=0.2, one_sided=True)
    _fit_or_error(report, "l1_to_l2", _log2_samples(ks, l12),
                  predicted_slope=config.d - s_fit / 2.0 - alpha,
                  tolerance=config.tolerance, one_sided=True)
    subset = np.nonzero(mu.points[:, 0] <= 1.0 / 3.0)[0]
    try:
        report.claims["weak_l1"] = restricted_weak_check(
            op, mu, subset, config.k_range, grid, s=s_fit,
            tolerance=config.tolerance,
        )
    except ValueError as exc:
        report.errors.append(f"weak_l1: {exc}")
    if degenerate:
        report.flags.append("degenerate")
    report.primary = "l2_to_l2"
    report.runtime_seconds = time.time() - t0
    return report


# ---------------------------------------------------------------------------
# lemma checks


def run_lemma_l2avg(config: ExperimentConfig) -> ExperimentReport:
    """Spherical L2 averages of the measure transform over growing balls."""
    t0 = time.time()
    report = _new_report("lemma-l2avg", config)
    mu, info = build_measure(config)
    fr = frostman_fit(mu)
    report.measured_exponents = {"s_fit": fr.s_exponent}
    report.tables["measure"] = {"label": mu.label, "n_atoms": mu.n_atoms}
    radii = [2.0 ** j for j in range(1, 7)]
    rep = l2_average_ratio(mu, np.ones(mu.n_atoms), radii, fr.s_exponent,
                           tolerance=0.1)
    report.claims["l2_average"] = rep
    report.primary = "l2_average"
    report.runtime_seconds = time.time() - t0
    return report


def run_lemma_disjoint(config: ExperimentConfig) -> ExperimentReport:
    """Off-band decay of piece pairings under the support cutoff."""
    t0 = time.time()
    report = _new_report("lemma-disjoint", config)
    mu, info = build_measure(config)
    grid = config.grid_spec()
    op = OperatorSpec.annulus(config.d, config.k_sphere, config.epsilon)
    ones = np.ones(mu.n_atoms)
    dm = disjointness_decay(op, mu, ones, ones, config.k_range, config.k_range,
                            grid, predicted_slope=-4.0)
    report.claims["off_band"] = dm.off_band_fit
    report.checks["all_off_below_on"] = bool(dm.all_off_below_on)
    report.tables["decay_matrix"] = dm.to_json_dict()
    report.tables["measure"] = {"label": mu.label, "n_atoms": mu.n_atoms}
    report.primary = "off_band"
    report.runtime_seconds = time.time() - t0
    return report


def run_lemma_cover(config: ExperimentConfig) -> ExperimentReport:
    """Greedy Vitali selection: exact disjointness, 5x covering, and
    comparability of the premeasure sum with the subset mass."""
    t0 = time.time()
    report = _new_report("lemma-cover", config)
    mu, info = build_measure(config)
    fr = frostman_fit(mu)
    s_fit = fr.s_exponent
    report.measured_exponents = {"s_fit": s_fit}
    report.tables["measure"] = {"label": mu.label, "n_atoms": mu.n_atoms}
    if config.subset_box is None:
        subset = np.arange(mu.n_atoms)
    else:
        lo = np.asarray(config.subset_box[0])
        hi = np.asarray(config.subset_box[1])
        inside = np.all((mu.points >= lo) & (mu.points <= hi), axis=1)
        subset = np.nonzero(inside)[0]
    deltas = [info["ratio"] ** j for j in (2, 3, 4)]
    details = []
    for delta in deltas:
        try:
            balls, mass_sum = vitali_cover(mu, subset, delta, s_fit)
        except ValueError as exc:
            report.errors.append("delta=%.4g: %s" % (delta, exc))
            continue
        disjoint = balls_pairwise_disjoint(balls)
        covered = balls_cover_points(balls, mu.points[subset])
        subset_mass = float(mu.weights[subset].sum())
        ratio = mass_sum / subset_mass if subset_mass > 0 else math.inf
        comparable = 1.0 / 25.0 <= ratio <= 25.0
        details.append({
            "delta": delta, "n_balls": len(balls), "premeasure_sum": mass_sum,
            "subset_mass": subset_mass, "ratio": ratio,
            "disjoint": bool(disjoint), "covers": bool(covered),
            "comparable": bool(comparable),
        })
        report.checks[f"disjoint_delta{delta:.4g}"] = bool(disjoint)
        report.checks[f"covers_delta{delta:.4g}"] = bool(covered)
        report.checks[f"comparable_delta{delta:.4g}"] = bool(comparable)
    report.tables["vitali"] = {"deltas": details}
    report.runtime_seconds = time.time() - t0
    return report


def run_lemma_suite(config: ExperimentConfig) -> ExperimentReport:
    """All three lemma checks merged into one report."""
    t0 = time.time()
    merged = _new_report("lemma-suite", config)
    for runner, prefix in ((run_lemma_l2avg, "l2avg"),
                           (run_lemma_disjoint, "disjoint"),
                           (run_lemma_cover, "cover")):
        sub = runner(config)
        for key, rep in sub.claims.items():
            merged.claims[f"{prefix}.{key}"] = rep
        for key, val in sub.checks.items():
            merged.checks[f"{prefix}.{key}"] = val
        for key, val in sub.tables.items():
            merged.tables[f"{prefix}.{key}"] = val
        merged.errors.extend(f"{prefix}: {e}" for e in sub.errors)
        merged.flags.extend(sub.flags)
        merged.measured_exponents.update(sub.measured_exponents)
    merged.primary = "disjoint.off_band"
    merged.runtime_seconds = time.time() - t0
    return merged
