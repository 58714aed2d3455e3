"""Thickened averaging operators and their dyadic pieces.

The operators act on measures: for an atomic mu,

    (A f)(x) = sum_j K(x - y_j) f_j w_j            (annulus / riesz)
    (A f)(x) = (1/eps) sum_j phi(Phi(x, y_j)/eps) psi(x, y_j) f_j w_j
                                                   (level-set form)

where phi is a fixed even bump with unit integral.  The annulus kernel
is the (1/eps)-normalised indicator of an eps-shell around the unit
sphere S^k in the first k+1 coordinates times the indicator of
[-1, 1]^{d-k-1} in the rest; the riesz kernel is |x|^{-(d-alpha)}
truncated at eps, i.e. the kernel value is capped at eps^{-(d-alpha)}
on B(0, eps) and untouched outside.

Dyadic pieces apply the operator to the k-th frequency shell of f mu.
For convolution kernels this is a frequency multiplication on the grid;
the level-set form is summed directly against the grid samples of the
piece.  Gather/scatter use the same multilinear stencil, so the grid
realisation of an even kernel is self-adjoint on L^2(mu) to roundoff.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
import math

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad

from .measures import DiscreteMeasure
from .norms import ScalingReport, scaling_fit
from .spectral import (
    DyadicProfile,
    GridFunction,
    GridSpec,
    gather,
    lp_piece,
    measure_fourier_grid,
    rasterize,
)

__all__ = [
    "MollifierSpec",
    "OperatorSpec",
    "DecayMatrix",
    "annulus_kernel",
    "riesz_kernel",
    "kernel_multiplier",
    "apply_operator",
    "apply_Ak",
    "pairing",
    "ak_pairing_frequency",
    "multiplier_sobolev_check",
    "disjointness_decay",
    "PHI_CATALOG",
    "PSI_CATALOG",
]


# ---------------------------------------------------------------------------
# mollifier


def _bump_raw(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out

_BUMP_NORM = None


def _bump_norm() -> float:
    global _BUMP_NORM
    if _BUMP_NORM is None:
        _BUMP_NORM = quad(lambda t: float(_bump_raw(t)), -1.0, 1.0, limit=200)[0]
    return _BUMP_NORM


@dataclass(frozen=True)
class MollifierSpec:
    """Even bump c exp(-1/(1-t^2)) on (-1, 1), normalised to unit integral."""

    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def value(self, t):
        # unit integral at scale 1; (1/scale) phi(t/scale) keeps it for any scale
        return _bump_raw(np.asarray(t, dtype=float) / self.scale) / (_bump_norm() * self.scale)

    def integral(self) -> float:
        return quad(lambda t: float(self.value(t)), -self.scale, self.scale, limit=200)[0]


# ---------------------------------------------------------------------------
# level-set catalog


def _phi_dot(x, y):
    return np.sum(x * y, axis=-1) - 1.0


def _phi_sphere(x, y):
    # normalised defining function: unit gradient on the sphere |x-y| = 1
    return 0.5 * (np.sum((x - y) ** 2, axis=-1) - 1.0)


def _phi_paraboloid(x, y):
    d = x.shape[-1]
    if d < 2:
        raise ValueError("paraboloid needs dim >= 2")
    return (y[..., d - 1] - x[..., d - 1]) - np.sum((y[..., :d - 1] - x[..., :d - 1]) ** 2, axis=-1)


PHI_CATALOG = {
    "dot-product": _phi_dot,
    "sphere": _phi_sphere,
    "paraboloid": _phi_paraboloid,
}


def _smoothstep(u):
    u = np.asarray(u, dtype=float)
    a = np.zeros_like(u)
    b = np.zeros_like(u)
    with np.errstate(over="ignore", under="ignore"):
        pos = u > 0
        a[pos] = np.exp(-1.0 / u[pos])
        neg = u < 1
        b[neg] = np.exp(-1.0 / (1.0 - u[neg]))
    out = np.where(u >= 1, 1.0, np.where(u <= 0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))
    return out


def _psi_one(x, y):
    return np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))


def _psi_away_origin(x, y):
    # vanishes when either argument is within 1/4 of the origin
    bx = _smoothstep((np.linalg.norm(x, axis=-1) - 0.25) / 0.25)
    by = _smoothstep((np.linalg.norm(y, axis=-1) - 0.25) / 0.25)
    return bx * by


PSI_CATALOG = {
    "one": _psi_one,
    "away-origin": _psi_away_origin,
}


# ---------------------------------------------------------------------------
# operator specification


@dataclass(frozen=True)
class OperatorSpec:
    variant: str  # "annulus" | "riesz" | "levelset"
    dim: int
    epsilon: float
    k_sphere: int = None
    alpha: float = None
    phi_id: str = None
    psi_id: str = "one"
    mollifier: MollifierSpec = MollifierSpec()

    def __post_init__(self):
        if self.variant not in ("annulus", "riesz", "levelset"):
            raise ValueError("unknown variant %r" % self.variant)
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.variant == "annulus":
            if self.k_sphere is None or not 1 <= self.k_sphere <= self.dim - 1:
                raise ValueError("annulus needs 1 <= k_sphere <= dim-1")
        if self.variant == "riesz":
            if self.alpha is None or not (0 < self.alpha < self.dim):
                raise ValueError("riesz needs 0 < alpha < dim")
        if self.variant == "levelset":
            if self.phi_id not in PHI_CATALOG:
                raise ValueError("unknown level function %r" % self.phi_id)
            if self.psi_id not in PSI_CATALOG:
                raise ValueError("unknown cutoff %r" % self.psi_id)

    # convenience constructors
    @classmethod
    def annulus(cls, dim, k_sphere, epsilon):
        return cls(variant="annulus", dim=dim, epsilon=epsilon, k_sphere=k_sphere)

    @classmethod
    def riesz(cls, dim, alpha, epsilon):
        return cls(variant="riesz", dim=dim, epsilon=epsilon, alpha=alpha)

    @classmethod
    def levelset(cls, dim, phi_id, epsilon, psi_id="one"):
        return cls(variant="levelset", dim=dim, epsilon=epsilon,
                   phi_id=phi_id, psi_id=psi_id)

    def is_convolution(self) -> bool:
        return self.variant in ("annulus", "riesz")

    def reach(self) -> float:
        """Radius beyond which the kernel vanishes (inf for riesz)."""
        if self.variant == "annulus":
            r = 1.0 + self.epsilon / 2.0
            if self.k_sphere < self.dim - 1:
                r = math.sqrt(r * r + (self.dim - 1 - self.k_sphere))
            return r
        return math.inf


def _kernel_on_differences(spec: OperatorSpec, z: np.ndarray) -> np.ndarray:
    """Convolution kernel values at difference vectors z (..., dim)."""
    if spec.variant == "annulus":
        k = spec.k_sphere
        r = np.linalg.norm(z[..., :k + 1], axis=-1)
        vals = ((r > 1.0 - spec.epsilon / 2.0) & (r < 1.0 + spec.epsilon / 2.0)).astype(float)
        for ax in range(k + 1, spec.dim):
            vals *= (np.abs(z[..., ax]) <= 1.0)
        return vals / spec.epsilon
    if spec.variant == "riesz":
        r = np.maximum(np.linalg.norm(z, axis=-1), spec.epsilon)
        return r ** (spec.alpha - spec.dim)
    raise ValueError("not a convolution")


def _levelset_kernel(spec: OperatorSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    phi = PHI_CATALOG[spec.phi_id]
    psi = PSI_CATALOG[spec.psi_id]
    vals = spec.mollifier.value(phi(x, y) / spec.epsilon) / spec.epsilon
    return vals * psi(x, y)


# ---------------------------------------------------------------------------
# gridded kernels


def _grid_positions(spec: GridSpec) -> np.ndarray:
    axes = [spec.origin[ax] + np.arange(spec.per_axis) * spec.h for ax in range(spec.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack(grids, axis=-1)


def _check_resolved(op: OperatorSpec, grid: GridSpec):
    if op.epsilon < 4.0 * grid.h:
        raise ValueError("underresolved: epsilon %.3g below 4 grid cells (h=%.3g)"
                         % (op.epsilon, grid.h))


def _centered_kernel(op: OperatorSpec, grid: GridSpec) -> np.ndarray:
    _check_resolved(op, grid)
    center = grid.origin + 0.5 * grid.side
    if op.variant == "annulus" and op.reach() > grid.side / 2.0:
        raise ValueError("kernel does not fit in the box")
    z = _grid_positions(grid) - center
    return _kernel_on_differences(op, z)


def annulus_kernel(dim: int, k_sphere: int, epsilon: float, grid: GridSpec) -> GridFunction:
    """Grid samples of the thickened spherical kernel, centred in the box."""
    op = OperatorSpec.annulus(dim, k_sphere, epsilon)
    return GridFunction(spec=grid, values=_centered_kernel(op, grid), space_tag="physical")


def riesz_kernel(dim: int, alpha: float, epsilon: float, grid: GridSpec) -> GridFunction:
    """Grid samples of the eps-truncated riesz kernel, centred in the box."""
    op = OperatorSpec.riesz(dim, alpha, epsilon)
    return GridFunction(spec=grid, values=_centered_kernel(op, grid), space_tag="physical")


# small value-keyed cache for kernel multipliers and frequency norms
_CACHE = OrderedDict()
_CACHE_MAX = 16


def _grid_key(grid: GridSpec):
    return (grid.dim, grid.per_axis, grid.side, grid.origin.tobytes())


def _cached(key, builder):
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    val = builder()
    _CACHE[key] = val
    while len(_CACHE) > _CACHE_MAX:
        _CACHE.popitem(last=False)
    return val


def _freq_norms(grid: GridSpec) -> np.ndarray:
    return _cached(("freqs", _grid_key(grid)), grid.freq_norms)


def kernel_multiplier(op: OperatorSpec, grid: GridSpec) -> np.ndarray:
    """DFT of the kernel rolled to the origin: the circular-convolution
    multiplier.  Multiply by h^d for the continuum transform of K."""
    def build():
        vals = _centered_kernel(op, grid)
        shift = [-(grid.per_axis // 2)] * grid.dim
        rolled = np.roll(vals, shift, axis=tuple(range(grid.dim)))
        return sfft.fftn(rolled)
    key = ("mult", op, _grid_key(grid))
    return _cached(key, build)


def _bump_grid(profile: DyadicProfile, k: int, grid: GridSpec) -> np.ndarray:
    key = ("bump", profile, k, _grid_key(grid))
    return _cached(key, lambda: profile.bump(k, _freq_norms(grid)))


# ---------------------------------------------------------------------------
# application


def apply_operator(op: OperatorSpec, mu: DiscreteMeasure, f, out_points,
                   method: str = "auto", grid: GridSpec = None,
                   budget: int = 2 ** 26) -> np.ndarray:
    """Values of A(f mu) at out_points.

    "direct" sums the exact kernel over the atoms carrying f; "grid"
    rasterises and convolves by FFT (convolution kernels only, raises
    "not a convolution" otherwise).  "auto" prefers direct and falls
    back to the grid when the pair count exceeds the budget.
    """
    f = np.asarray(f)
    if f.shape != (mu.n_atoms,):
        raise ValueError("f must give one value per atom")
    pts = np.asarray(out_points, dtype=float)
    squeeze = pts.ndim == 1
    if squeeze:
        pts = pts.reshape(1, -1)
    if pts.shape[1] != mu.dim or op.dim != mu.dim:
        raise ValueError("dimension mismatch")

    nnz = np.flatnonzero(f != 0)
    if method == "auto":
        method = "direct" if nnz.size * pts.shape[0] <= budget or grid is None else "grid"
    if method == "grid":
        if not op.is_convolution():
            raise ValueError("not a convolution")
        if grid is None:
            raise ValueError("grid method needs a GridSpec")
        mult = kernel_multiplier(op, grid)
        fhat = sfft.fftn(rasterize(mu, f, grid))
        vals_grid = sfft.ifftn(fhat * mult)
        out = gather(grid, vals_grid, pts)
        out = out.real if not np.iscomplexobj(f) else out
        return out[0] if squeeze else out
    if method != "direct":
        raise ValueError("unknown method %r" % method)

    src = mu.points[nnz]
    coef = (f * mu.weights)[nnz]
    out = np.zeros(pts.shape[0], dtype=coef.dtype)
    if nnz.size == 0:
        return out[0] if squeeze else out
    chunk = max(1, int(2 ** 22 // max(1, nnz.size)))
    for lo in range(0, pts.shape[0], chunk):
        block = pts[lo:lo + chunk]
        if op.is_convolution():
            z = block[:, None, :] - src[None, :, :]
            kern = _kernel_on_differences(op, z)
        else:
            kern = _levelset_kernel(op, block[:, None, :], src[None, :, :])
        out[lo:lo + chunk] = kern @ coef
    return out[0] if squeeze else out


def apply_Ak(op: OperatorSpec, mu: DiscreteMeasure, f, k: int, grid: GridSpec,
             out_points, profile: DyadicProfile = None,
             budget: int = 2 ** 26) -> np.ndarray:
    """Values of A applied to the k-th dyadic piece of f mu, at out_points.

    Convolution kernels multiply rho_k and the kernel transform on the
    frequency lattice; the level-set form sums the thickened kernel
    directly against the grid samples of the piece.
    """
    f = np.asarray(f)
    pts = np.asarray(out_points, dtype=float)
    squeeze = pts.ndim == 1
    if squeeze:
        pts = pts.reshape(1, -1)
    if profile is None:
        profile = DyadicProfile.for_grid(grid)
    _check_resolved(op, grid)
    if op.is_convolution():
        corner = math.sqrt(grid.dim) * grid.nyquist
        if k >= 1 and 2.0 ** k > corner:
            raise ValueError("nyquist: piece %d empty on this grid" % k)
        fhat = sfft.fftn(rasterize(mu, f, grid))
        mult = kernel_multiplier(op, grid) * _bump_grid(profile, k, grid)
        vals_grid = sfft.ifftn(fhat * mult)
        out = gather(grid, vals_grid, pts)
    else:
        piece = lp_piece(mu, f, k, grid, profile=profile, method="raster")
        cells = _grid_positions(grid).reshape(-1, grid.dim)
        dens = piece.values.reshape(-1)
        if pts.shape[0] * cells.shape[0] > budget:
            raise ValueError("level-set piece application exceeds budget")
        out = np.zeros(pts.shape[0], dtype=complex)
        chunk = max(1, int(2 ** 22 // cells.shape[0]))
        cellvol = grid.h ** grid.dim
        for lo in range(0, pts.shape[0], chunk):
            block = pts[lo:lo + chunk]
            kern = _levelset_kernel(op, block[:, None, :], cells[None, :, :])
            out[lo:lo + chunk] = (kern * dens[None, :]).sum(axis=1) * cellvol
    if not np.iscomplexobj(f):
        out = out.real
    return out[0] if squeeze else out


def pairing(mu: DiscreteMeasure, u, v) -> complex:
    """<u, v>_{L^2(mu)} = sum u conj(v) w."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != (mu.n_atoms,) or v.shape != (mu.n_atoms,):
        raise ValueError("need one value per atom")
    return complex(np.sum(u * np.conj(v) * mu.weights))


def ak_pairing_frequency(op: OperatorSpec, mu: DiscreteMeasure, f, g, k: int,
                         grid: GridSpec, profile: DyadicProfile = None) -> complex:
    """<(A (f mu)_k)^, (g mu)^> over the frequency lattice.

    By Plancherel this equals the mu-side pairing of A_k f against g;
    computing it on the frequency side exercises the transform
    normalisations independently.
    """
    if not op.is_convolution():
        raise ValueError("not a convolution")
    if profile is None:
        profile = DyadicProfile.for_grid(grid)
    F = measure_fourier_grid(mu, f, grid, method="raster")
    G = measure_fourier_grid(mu, g, grid, method="raster")
    mult = kernel_multiplier(op, grid) * grid.h ** grid.dim  # continuum K^
    bump = _bump_grid(profile, k, grid)
    integrand = mult * bump * F * np.conj(G)
    return complex(integrand.sum() / grid.side ** grid.dim)


# ---------------------------------------------------------------------------
# multiplier decay check


def multiplier_sobolev_check(op: OperatorSpec, alpha: float, grid: GridSpec,
                             shells=range(1, 7), tolerance: float = 0.1,
                             one_sided: bool = True) -> ScalingReport:
    """Shell-wise sup of |K^(xi)| (1+|xi|)^alpha against the shell index.

    A kernel whose transform decays like |xi|^{-alpha} gives slope ~ 0;
    the hypothesis "decay at least alpha" corresponds one-sidedly to
    slope <= 0 + tolerance.
    """
    mult = np.abs(kernel_multiplier(op, grid)) * grid.h ** grid.dim
    r = _freq_norms(grid)
    samples = []
    sups = []
    for j in shells:
        mask = (r >= 2.0 ** j) & (r < 2.0 ** (j + 1))
        if not mask.any():
            raise ValueError("nyquist: shell %d not on this grid" % j)
        sup = float((mult[mask] * (1.0 + r[mask]) ** alpha).max())
        sups.append(sup)
        samples.append((float(j), math.log2(sup) if sup > 0 else -math.inf))
    rep = scaling_fit(samples, predicted_slope=0.0, tolerance=tolerance,
                      one_sided=one_sided, abscissa_kind="k_index")
    rep.extras["shell_sups"] = sups
    rep.extras["alpha"] = float(alpha)
    return rep


# ---------------------------------------------------------------------------
# essential disjointness


@dataclass
class DecayMatrix:
    j_range: list
    k_range: list
    values: np.ndarray  # |<A (f mu)_k, (g mu)_j>|
    band: int
    on_band_max: float
    off_band_fit: ScalingReport
    all_off_below_on: bool

    def to_json_dict(self) -> dict:
        return {
            "j_range": list(map(int, self.j_range)),
            "k_range": list(map(int, self.k_range)),
            "matrix": [[float(v) for v in row] for row in self.values],
            "band": self.band,
            "on_band_max": self.on_band_max,
            "off_band_fit": self.off_band_fit.to_json_dict(),
            "all_off_below_on": self.all_off_below_on,
        }


def _support_window(mu: DiscreteMeasure, grid: GridSpec) -> np.ndarray:
    """Smooth spatial cutoff: 1 on the measure's bounding box, 0 well
    before the box edge.  This is the psi(x, y) = beta(x) beta(y) cutoff
    of the averaging operator; it is what makes the off-band pairings
    decay instead of vanishing identically."""
    lo, hi = mu.bounding_box
    pos = _grid_positions(grid)
    out = np.ones(grid.shape)
    for ax in range(grid.dim):
        room_lo = lo[ax] - grid.origin[ax]
        room_hi = (grid.origin[ax] + grid.side) - hi[ax]
        w_lo = max(1e-6, 0.85 * room_lo)
        w_hi = max(1e-6, 0.85 * room_hi)
        x = pos[..., ax]
        out = out * _smoothstep((x - (lo[ax] - w_lo)) / w_lo)
        out = out * _smoothstep(((hi[ax] + w_hi) - x) / w_hi)
    return out


def disjointness_decay(op: OperatorSpec, mu: DiscreteMeasure, f, g,
                       j_range, k_range, grid: GridSpec,
                       profile: DyadicProfile = None, band: int = 2,
                       predicted_slope: float = -4.0) -> DecayMatrix:
    """|<A (f mu)_k, (g mu)_j>| for all (j, k), with the support cutoff.

    Entries with |j - k| <= band are "on band"; the off-band entries are
    fitted in log2 against max(j, k).  The one-sided claim is that they
    decay at least like 2^{predicted_slope * max(j,k)} relative to the
    on-band scale.
    """
    if not op.is_convolution():
        raise ValueError("level-set pairs are summed directly; use apply_Ak")
    if profile is None:
        profile = DyadicProfile.for_grid(grid)
    j_range = [int(j) for j in j_range]
    k_range = [int(k) for k in k_range]
    beta = _support_window(mu, grid)
    mult = kernel_multiplier(op, grid)
    cellvol = grid.h ** grid.dim

    F = sfft.fftn(rasterize(mu, np.asarray(f), grid))
    G = sfft.fftn(rasterize(mu, np.asarray(g), grid))

    def piece_phys(hat, k):
        return sfft.ifftn(hat * _bump_grid(profile, k, grid)) / cellvol

    g_pieces = {j: piece_phys(G, j) for j in j_range}
    values = np.zeros((len(j_range), len(k_range)))
    for ck, k in enumerate(k_range):
        pk = beta * piece_phys(F, k)
        conv = sfft.ifftn(sfft.fftn(pk) * mult) * cellvol
        Ak = beta * conv
        for cj, j in enumerate(j_range):
            val = np.sum(Ak * np.conj(g_pieces[j])) * cellvol
            values[cj, ck] = abs(complex(val))

    on_mask = np.array([[abs(j - k) <= band for k in k_range] for j in j_range])
    on_band_max = float(values[on_mask].max()) if on_mask.any() else 0.0
    samples = []
    all_below = True
    for cj, j in enumerate(j_range):
        for ck, k in enumerate(k_range):
            if abs(j - k) <= band:
                continue
            v = values[cj, ck]
            if v > on_band_max:
                all_below = False
            samples.append((float(max(j, k)), math.log2(v) if v > 0 else -math.inf))
    try:
        fit = scaling_fit(samples, predicted_slope=predicted_slope, tolerance=0.0,
                          one_sided=True, abscissa_kind="k_index")
    except ValueError:
        # all off-band pairings vanished (e.g. f or g identically zero)
        fit = ScalingReport(slope=0.0, intercept=0.0, r2=0.0, samples=samples,
                            abscissa_kind="k_index", predicted_slope=predicted_slope,
                            verdict="inconclusive", tolerance=0.0, one_sided=True,
                            extras={"degenerate": True})
    return DecayMatrix(j_range=j_range, k_range=k_range, values=values, band=band,
                       on_band_max=on_band_max, off_band_fit=fit,
                       all_off_below_on=all_below)
