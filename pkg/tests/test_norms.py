import math

import numpy as np
import pytest

from fraver.measures import make_cantor, make_lebesgue_cube, product_measure
from fraver.norms import (
    build_test_family,
    lp_norm,
    op_norm_estimate,
    power_iteration,
    scaling_fit,
)


def test_lp_norm_constant():
    mu = make_cantor(1 / 3, 5)  # probability measure
    f = np.ones(mu.n_atoms)
    for p in (1, 1.5, 2, 4, math.inf):
        assert lp_norm(mu, f, p) == pytest.approx(1.0)


def test_lp_norm_weighted_values():
    mu = make_lebesgue_cube(1, 4)  # weights 1/4 each
    f = np.array([1.0, -2.0, 0.0, 2.0])
    assert lp_norm(mu, f, 1) == pytest.approx(5 / 4)
    assert lp_norm(mu, f, 2) == pytest.approx(math.sqrt(9 / 4))
    assert lp_norm(mu, f, math.inf) == pytest.approx(2.0)


def test_lp_norm_monotone_in_p_for_probability():
    mu = make_cantor(1 / 3, 6)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(mu.n_atoms)
    norms = [lp_norm(mu, f, p) for p in (1, 2, 4, 8)]
    assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))
    assert norms[-1] <= lp_norm(mu, f, math.inf) + 1e-12


def test_lp_norm_validation():
    mu = make_cantor(1 / 3, 2)
    with pytest.raises(ValueError):
        lp_norm(mu, np.ones(3), 2)
    with pytest.raises(ValueError):
        lp_norm(mu, np.ones(mu.n_atoms), 0.5)


# ---------------------------------------------------------------------------
# operator norms against a dense SVD oracle


def _matrix_operator(kernel, mu):
    # A(f mu)(x_i) = sum_j K(x_i, x_j) f_j w_j
    return lambda f: kernel @ (np.asarray(f) * mu.weights)


def _svd_norm(kernel, mu):
    # ground truth for L^2(mu) -> L^2(mu): sqrt-weight conjugation
    sw = np.sqrt(mu.weights)
    return float(np.linalg.svd(sw[:, None] * kernel * sw[None, :], compute_uv=False)[0])


def test_op_norm_matches_svd_on_symmetric_kernel():
    mu = make_lebesgue_cube(1, 24)
    x = mu.points.ravel()
    kernel = np.exp(-8.0 * (x[:, None] - x[None, :]) ** 2)
    est = op_norm_estimate(_matrix_operator(kernel, mu), mu, mu, 2, 2)
    truth = _svd_norm(kernel, mu)
    assert est.value <= truth * (1 + 1e-8)
    assert est.value >= truth * 0.999


def test_power_iteration_rayleigh_monotone():
    mu = make_lebesgue_cube(1, 32)
    x = mu.points.ravel()
    kernel = np.cos(3.0 * (x[:, None] - x[None, :]))  # even, sign-indefinite
    value, hist = power_iteration(_matrix_operator(kernel, mu), mu, mu,
                                  iters=60, tol=0.0)
    assert len(hist) >= 4
    diffs = np.diff(hist)
    assert np.all(diffs >= -1e-10)
    assert value == pytest.approx(_svd_norm(kernel, mu), rel=1e-6)


def test_family_value_is_lower_bound():
    mu = product_measure(make_cantor(1 / 3, 4), make_cantor(1 / 3, 4))
    d = np.linalg.norm(mu.points[:, None, :] - mu.points[None, :, :], axis=-1)
    kernel = np.maximum(0.0, 1.0 - 4.0 * d)
    apply_op = _matrix_operator(kernel, mu)
    est22 = op_norm_estimate(apply_op, mu, mu, 2, 2)
    best_family = -1.0
    for _, f in build_test_family(mu):
        nf = lp_norm(mu, f, 2)
        if nf > 0:
            best_family = max(best_family, lp_norm(mu, apply_op(f), 2) / nf)
    assert est22.value >= best_family - 1e-12
    truth = _svd_norm(kernel, mu)
    assert est22.value <= truth * (1 + 1e-8)


def test_op_norm_one_infinity():
    mu = make_lebesgue_cube(1, 16)
    kernel = np.full((mu.n_atoms, mu.n_atoms), 2.0)
    est = op_norm_estimate(_matrix_operator(kernel, mu), mu, mu, 1, math.inf)
    # single sharp atom: ||A e_j||_inf / ||e_j||_1 = 2 exactly
    assert est.value == pytest.approx(2.0, rel=1e-9)


def test_op_norm_zero_operator():
    mu = make_cantor(1 / 3, 3)
    est = op_norm_estimate(lambda f: np.zeros(mu.n_atoms), mu, mu, 2, 2)
    assert est.value == 0.0


# ---------------------------------------------------------------------------
# scaling fits


def test_scaling_fit_exact_line():
    samples = [(k, -2.0 * k + 1.0) for k in range(6)]
    rep = scaling_fit(samples, predicted_slope=-2.0, tolerance=0.1)
    assert rep.slope == pytest.approx(-2.0)
    assert rep.r2 == pytest.approx(1.0)
    assert rep.verdict == "consistent"


def test_scaling_fit_violation():
    samples = [(k, 1.5 * k) for k in range(6)]
    rep = scaling_fit(samples, predicted_slope=0.0, tolerance=0.3)
    assert rep.verdict == "violated"


def test_scaling_fit_one_sided():
    samples = [(k, -3.0 * k) for k in range(5)]
    two = scaling_fit(samples, predicted_slope=-2.0, tolerance=0.3)
    one = scaling_fit(samples, predicted_slope=-2.0, tolerance=0.3, one_sided=True)
    assert two.verdict == "violated"
    assert one.verdict == "consistent"


def test_scaling_fit_without_prediction():
    rep = scaling_fit([(k, 0.5 * k) for k in range(5)])
    assert rep.verdict == "inconclusive"


def test_scaling_fit_too_few_samples():
    with pytest.raises(ValueError, match="too few samples"):
        scaling_fit([(0, 0.0), (1, 1.0), (2, 2.0)], predicted_slope=1.0)
    with pytest.raises(ValueError, match="too few samples"):
        # four samples but spanning fewer than 3 dyadic steps
        scaling_fit([(0, 0.0), (0.5, 0.5), (1.0, 1.0), (1.5, 1.5)], predicted_slope=1.0)


def test_scaling_fit_degenerate_ordinates():
    samples = [(0, -np.inf), (1, -np.inf), (2, -np.inf), (3, -np.inf), (4, -np.inf)]
    with pytest.raises(ValueError):
        scaling_fit(samples, predicted_slope=0.0)


def test_scaling_fit_bad_abscissa_kind():
    with pytest.raises(ValueError):
        scaling_fit([(k, k) for k in range(5)], abscissa_kind="eps")
