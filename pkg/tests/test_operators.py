"""Thickened-kernel operators: kernel builders, dyadic-piece application,
multiplier decay, and cross-shell pairing decay."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fraver.measures import (
    DiscreteMeasure,
    make_cantor,
    make_lebesgue_cube,
    product_measure,
    translate,
)
from fraver.norms import power_iteration, scaling_fit
from fraver.operators import (
    MollifierSpec,
    OperatorSpec,
    annulus_kernel,
    apply_Ak,
    apply_operator,
    ak_pairing_frequency,
    disjointness_decay,
    kernel_multiplier,
    multiplier_sobolev_check,
    pairing,
    riesz_kernel,
)
from fraver.spectral import DyadicProfile, GridSpec


def test_mollifier_has_unit_integral():
    for scale in (1.0, 0.5, 2.0):
        m = MollifierSpec(scale=scale)
        assert abs(m.integral() - 1.0) < 1e-10
        # support inside [-scale, scale]
        assert m.value(scale * 1.01) == 0.0
        assert m.value(-scale * 1.01) == 0.0
        assert m.value(0.0) > 0.0


def test_operator_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec(variant="mystery", dim=2, epsilon=0.1)
    with pytest.raises(ValueError):
        OperatorSpec.annulus(2, 0, 0.1)
    with pytest.raises(ValueError):
        OperatorSpec.annulus(2, 2, 0.1)
    with pytest.raises(ValueError):
        OperatorSpec.riesz(2, 2.5, 0.1)
    with pytest.raises(ValueError):
        OperatorSpec.riesz(2, 0.0, 0.1)
    with pytest.raises(ValueError):
        OperatorSpec.levelset(2, "nope", 0.1)
    with pytest.raises(ValueError):
        OperatorSpec.levelset(2, "sphere", 0.1, psi_id="nope")
    with pytest.raises(ValueError):
        OperatorSpec.annulus(2, 1, -0.1)


def test_annulus_kernel_mass_matches_circle_length():
    grid = GridSpec(dim=2, per_axis=1024, side=3.0, origin=(-1.5, -1.5))
    kern = annulus_kernel(2, 1, 0.1, grid)
    mass = kern.values.sum() * grid.h ** 2
    assert abs(mass - 2 * math.pi) / (2 * math.pi) < 0.03


def test_annulus_kernel_mass_matches_sphere_area():
    grid = GridSpec(dim=3, per_axis=128, side=3.0, origin=(-1.5, -1.5, -1.5))
    kern = annulus_kernel(3, 2, 0.1, grid)
    mass = kern.values.sum() * grid.h ** 3
    assert abs(mass - 4 * math.pi) / (4 * math.pi) < 0.05


def test_annulus_kernel_mass_improves_with_resolution():
    target = 2 * math.pi
    errs = []
    for n in (512, 1024):
        grid = GridSpec(dim=2, per_axis=n, side=3.0, origin=(-1.5, -1.5))
        mass = annulus_kernel(2, 1, 0.1, grid).values.sum() * grid.h ** 2
        errs.append(abs(mass - target))
    assert errs[1] < errs[0]


def test_annulus_kernel_guards():
    small = GridSpec(dim=2, per_axis=64, side=3.0, origin=(-1.5, -1.5))
    with pytest.raises(ValueError, match="underresolved"):
        annulus_kernel(2, 1, 2 ** -8, small)
    tight = GridSpec(dim=2, per_axis=256, side=1.8, origin=(-0.9, -0.9))
    with pytest.raises(ValueError, match="does not fit"):
        annulus_kernel(2, 1, 0.1, tight)


def test_riesz_kernel_values_on_lattice():
    # h = 1/64, so the points (0,0) and (1,0) sit exactly on cells
    grid = GridSpec(dim=2, per_axis=256, side=4.0, origin=(-2.0, -2.0))
    eps = 2 ** -4
    kern = riesz_kernel(2, 1.0, eps, grid)
    c = 128
    assert kern.values[c, c] == pytest.approx(eps ** -1.0)
    assert kern.values[c + 64, c] == pytest.approx(1.0)
    assert kern.values[c, c - 64] == pytest.approx(1.0)


def test_riesz_multiplier_decay_slope():
    # truncated 1/|x| kernel in the plane: transform modulus ~ c/|xi|
    grid = GridSpec(dim=2, per_axis=4096, side=4.0, origin=(-2.0, -2.0))
    op = OperatorSpec.riesz(2, 1.0, 2 ** -8)
    mult = np.abs(kernel_multiplier(op, grid)) * grid.h ** 2
    r = grid.freq_norms()
    xs, ys = [], []
    for j in range(1, 5):
        mask = (r >= 2.0 ** j) & (r < 2.0 ** (j + 1))
        xs.append(float(j))
        ys.append(math.log2(float(mult[mask].max())))
    slope = np.polyfit(xs, ys, 1)[0]
    assert abs(slope - (-1.0)) < 0.1


def test_riesz_multiplier_flat_at_matched_exponent():
    grid = GridSpec(dim=1, per_axis=2 ** 20, side=4.0, origin=(-2.0,))
    op = OperatorSpec.riesz(1, 0.5, 2 ** -16)
    rep = multiplier_sobolev_check(op, 0.5, grid, shells=range(2, 8),
                                   one_sided=False, tolerance=0.1)
    assert rep.verdict == "consistent"
    assert abs(rep.slope) < 0.1


def test_annulus_multiplier_sobolev_half_holds_one_fails():
    grid = GridSpec(dim=2, per_axis=4096, side=4.0, origin=(-2.0, -2.0))
    op = OperatorSpec.annulus(2, 1, 2 ** -8)
    rep_half = multiplier_sobolev_check(op, 0.5, grid, shells=range(1, 7))
    assert rep_half.verdict == "consistent"
    assert rep_half.slope <= 0.1
    rep_one = multiplier_sobolev_check(op, 1.0, grid, shells=range(1, 6),
                                       one_sided=False, tolerance=0.2)
    # excess weight makes the shell sups grow like 2^{j/2}
    assert 0.3 < rep_one.slope < 0.7


def test_multiplier_check_rejects_levelset():
    grid = GridSpec(dim=2, per_axis=256, side=3.0, origin=(-1.5, -1.5))
    op = OperatorSpec.levelset(2, "sphere", 0.1)
    with pytest.raises(ValueError, match="not a convolution"):
        multiplier_sobolev_check(op, 0.5, grid)


def _lattice_measure(grid, seed=7, lo=100, hi=412, n=400):
    rng = np.random.default_rng(seed)
    idx = rng.integers(lo, hi, size=(n, 2))
    pts = np.unique(idx, axis=0).astype(float) * grid.h + grid.origin
    w = rng.uniform(0.5, 1.5, size=pts.shape[0])
    return DiscreteMeasure(dim=2, points=pts, weights=w, label="lattice-random")


def test_apply_operator_zero_and_linear():
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.5, -1.5))
    mu = _lattice_measure(grid)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(mu.n_atoms)
    g = rng.standard_normal(mu.n_atoms)
    pts = mu.points[:16]
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    assert np.all(apply_operator(op, mu, np.zeros(mu.n_atoms), pts) == 0)
    for method, kw in (("direct", {}), ("grid", {"grid": grid})):
        lhs = apply_operator(op, mu, 2.0 * f - 3.0 * g, pts, method=method, **kw)
        rhs = (2.0 * apply_operator(op, mu, f, pts, method=method, **kw)
               - 3.0 * apply_operator(op, mu, g, pts, method=method, **kw))
        scale = np.abs(lhs).max()
        assert np.abs(lhs - rhs).max() <= 1e-10 * scale


def test_apply_operator_direct_matches_grid_on_lattice_atoms():
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.5, -1.5))
    mu = _lattice_measure(grid)
    f = np.random.default_rng(2).standard_normal(mu.n_atoms)
    pts = mu.points[:32]
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    direct = apply_operator(op, mu, f, pts, method="direct")
    gridded = apply_operator(op, mu, f, pts, method="grid", grid=grid)
    assert np.abs(direct - gridded).max() <= 1e-10 * np.abs(direct).max()


def test_annulus_average_at_square_corner_and_center():
    mu = make_lebesgue_cube(2, 512, side=1.0, mass=1.0)
    op = OperatorSpec.annulus(2, 1, 0.05)
    f = np.ones(mu.n_atoms)
    corner = apply_operator(op, mu, f, np.array([0.0, 0.0]), method="direct")

    def arc_angle(r):
        if r <= 1.0:
            return math.pi / 2
        return math.pi / 2 - 2 * math.acos(1.0 / r)

    area = quad(lambda r: r * arc_angle(r), 0.975, 1.025, limit=200)[0]
    assert corner == pytest.approx(area / 0.05, rel=0.02)
    # the unit annulus around the center misses the square entirely
    center = apply_operator(op, mu, f, np.array([0.5, 0.5]), method="direct")
    assert center == 0.0


def test_levelset_average_matches_fixed_quadrature():
    # oracle: adaptive 2-D quadrature of
    #   (1/eps) phi((x.y - 1)/eps) psi(x, y) (y1 + y2^2)
    # over the unit square at x = (1.2, 1.3), eps = 0.1
    oracle = 0.39455109994386456
    mu = make_lebesgue_cube(2, 256, side=1.0, mass=1.0)
    f = mu.points[:, 0] + mu.points[:, 1] ** 2
    op = OperatorSpec.levelset(2, "dot-product", 0.1, psi_id="away-origin")
    got = apply_operator(op, mu, f, np.array([1.2, 1.3]), method="direct")
    assert got == pytest.approx(oracle, rel=0.01)


def test_levelset_rejects_grid_convolution():
    grid = GridSpec(dim=2, per_axis=256, side=3.0, origin=(-1.5, -1.5))
    mu = make_lebesgue_cube(2, 8, side=1.0, mass=1.0)
    op = OperatorSpec.levelset(2, "sphere", 0.1)
    with pytest.raises(ValueError, match="not a convolution"):
        apply_operator(op, mu, np.ones(mu.n_atoms), mu.points[:2],
                       method="grid", grid=grid)


def test_translation_covariance_of_convolution_kernels():
    rng = np.random.default_rng(5)
    mu = make_lebesgue_cube(2, 32, side=1.0, mass=1.0)
    f = rng.standard_normal(mu.n_atoms)
    pts = rng.uniform(-0.2, 1.2, size=(20, 2))
    shift = np.array([0.37, -0.21])
    for op in (OperatorSpec.annulus(2, 1, 0.07), OperatorSpec.riesz(2, 1.0, 0.05)):
        a = apply_operator(op, mu, f, pts, method="direct")
        b = apply_operator(op, translate(mu, shift), f, pts + shift, method="direct")
        assert np.abs(a - b).max() <= 1e-8 * np.abs(a).max()


def test_piece_sum_reconstructs_full_operator():
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.5, -1.5))
    mu = _lattice_measure(grid)
    f = np.random.default_rng(3).standard_normal(mu.n_atoms)
    pts = mu.points[:32]
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    prof = DyadicProfile.for_grid(grid)
    full = apply_operator(op, mu, f, pts, method="grid", grid=grid)
    acc = np.zeros(32)
    for k in range(prof.k_max + 1):
        acc = acc + apply_Ak(op, mu, f, k, grid, pts, profile=prof)
    assert np.abs(acc - full).max() <= 1e-6 * np.abs(full).max()


def test_apply_Ak_zero_input_and_nyquist_guard():
    grid = GridSpec(dim=2, per_axis=64, side=3.0, origin=(-1.5, -1.5))
    mu = make_lebesgue_cube(2, 8, side=1.0, mass=1.0)
    op = OperatorSpec.annulus(2, 1, 0.5)
    out = apply_Ak(op, mu, np.zeros(mu.n_atoms), 2, grid, mu.points[:4])
    assert np.all(out == 0)
    with pytest.raises(ValueError, match="nyquist"):
        apply_Ak(op, mu, np.ones(mu.n_atoms), 4, grid, mu.points[:4])


def test_piece_pairing_atom_vs_frequency_sides():
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.5, -1.5))
    mu = _lattice_measure(grid)
    rng = np.random.default_rng(9)
    f = rng.standard_normal(mu.n_atoms)
    g = rng.standard_normal(mu.n_atoms)
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    prof = DyadicProfile.for_grid(grid)
    for k in (0, 2, 4):
        atom_side = pairing(mu, apply_Ak(op, mu, f, k, grid, mu.points, profile=prof), g)
        freq_side = ak_pairing_frequency(op, mu, f, g, k, grid, profile=prof)
        assert abs(atom_side - freq_side) <= 1e-4 * max(abs(atom_side), 1e-12)


def test_pairing_values():
    mu = make_lebesgue_cube(1, 8, side=1.0, mass=1.0)
    ones = np.ones(8)
    assert pairing(mu, ones, ones) == pytest.approx(1.0)
    left = (np.arange(8) < 4).astype(float)
    right = 1.0 - left
    assert pairing(mu, left, right) == 0.0
    with pytest.raises(ValueError):
        pairing(mu, np.ones(5), ones)


def test_piece_norm_decay_on_cantor_square():
    c = make_cantor(1 / 3, 5)
    mu = product_measure(c, c)
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.0, -1.0))
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    s = 2 * math.log(2) / math.log(3)
    samples = []
    for k in range(1, 7):
        val, _ = power_iteration(
            lambda v: apply_Ak(op, mu, v, k, grid, mu.points),
            mu, mu, iters=14, seed=k)
        samples.append((float(k), math.log2(val)))
    rep = scaling_fit(samples, predicted_slope=2 - s - 0.5, tolerance=0.3,
                      one_sided=True, abscissa_kind="k_index")
    assert rep.verdict == "consistent"


def test_sphere_levelset_piece_matches_annulus_piece():
    mu = make_lebesgue_cube(2, 64, side=1.0, mass=1.0)
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.0, -1.0))
    f = np.ones(mu.n_atoms)
    eps = 2 ** -5
    pts = np.array([[0.5, 0.5], [0.0, 0.0], [0.25, 0.7], [1.3, 0.5], [0.5, -0.3]])
    va = apply_Ak(OperatorSpec.annulus(2, 1, eps), mu, f, 1, grid, pts)
    vl = apply_Ak(OperatorSpec.levelset(2, "sphere", eps), mu, f, 1, grid, pts)
    assert np.abs(va - vl).max() <= 0.10 * np.abs(va).max()


def test_piece_sup_growth_bounded_by_one_per_octave():
    c = make_cantor(1 / 3, 6)
    mu = product_measure(c, c)
    grid = GridSpec(dim=2, per_axis=1024, side=3.0, origin=(-1.0, -1.0))
    op = OperatorSpec.annulus(2, 1, 2 ** -6)
    f = np.ones(mu.n_atoms)
    l1 = float(np.sum(np.abs(f) * mu.weights))
    samples = []
    for k in range(1, 8):
        sup = np.abs(apply_Ak(op, mu, f, k, grid, mu.points)).max()
        samples.append((float(k), math.log2(sup / l1)))
    slope = np.polyfit([s[0] for s in samples], [s[1] for s in samples], 1)[0]
    assert slope <= 1.0 + 0.2


def test_cross_shell_pairings_decay_off_band():
    c = make_cantor(1 / 3, 6)
    mu = product_measure(c, c)
    grid = GridSpec(dim=2, per_axis=512, side=3.0, origin=(-1.0, -1.0))
    op = OperatorSpec.annulus(2, 1, 2 ** -5)
    f = np.ones(mu.n_atoms)
    g = np.random.default_rng(3).choice([-1.0, 1.0], size=mu.n_atoms)
    dm = disjointness_decay(op, mu, f, g, range(0, 7), range(0, 7), grid)
    assert dm.values.shape == (7, 7)
    assert dm.all_off_below_on
    assert dm.off_band_fit.slope <= -4.0
    assert dm.off_band_fit.verdict == "consistent"
    d = dm.to_json_dict()
    assert d["on_band_max"] == dm.on_band_max
    assert len(d["matrix"]) == 7


def test_cross_shell_pairings_zero_input():
    c = make_cantor(1 / 3, 4)
    mu = product_measure(c, c)
    grid = GridSpec(dim=2, per_axis=256, side=3.0, origin=(-1.0, -1.0))
    op = OperatorSpec.annulus(2, 1, 2 ** -4)
    dm = disjointness_decay(op, mu, np.zeros(mu.n_atoms), np.ones(mu.n_atoms),
                            range(0, 5), range(0, 5), grid)
    assert np.all(dm.values == 0.0)
    assert dm.off_band_fit.verdict == "inconclusive"
