import math

import numpy as np
import pytest

from fraver.experiments import (
    ExperimentConfig,
    ExperimentReport,
    build_measure,
    default_config,
    run_lemma_cover,
    run_lemma_disjoint,
    run_lemma_l2avg,
    run_lemma_suite,
    run_piece_norms,
    run_sharpness_main,
    run_sharpness_second,
    run_threshold_s,
)
from fraver.norms import ScalingReport

LOG2_3 = math.log(2.0) / math.log(3.0)

KINDS = (
    "sharp-main",
    "sharp-threshold",
    "sharp-second",
    "pieces",
    "lemma-l2avg",
    "lemma-disjoint",
    "lemma-cover",
    "diagram",
    "measure",
)


def _cfg(base_kind, **over):
    return ExperimentConfig.from_dict(over, base=default_config(base_kind))


def test_config_rejects_bad_epsilon_grids():
    with pytest.raises(ValueError, match="strictly decreasing"):
        _cfg("pieces", eps_list=(0.125, 0.25))
    with pytest.raises(ValueError, match="powers of two"):
        _cfg("pieces", eps_list=(0.3,))
    with pytest.raises(ValueError):
        _cfg("pieces", eps_list=())


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        ExperimentConfig.from_dict({"bogus_field": 1})


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        _cfg("pieces", k_sphere=2)  # codimension must stay positive
    with pytest.raises(ValueError):
        _cfg("pieces", grid_origin=(-0.75, -0.75, -0.75))
    with pytest.raises(ValueError):
        _cfg("pieces", pairs=((0.5, 2.0),))
    with pytest.raises(ValueError):
        _cfg("pieces", tolerance=-0.1)
    with pytest.raises(ValueError):
        _cfg("pieces", alpha=0.0)


def test_default_config_kinds():
    for kind in KINDS:
        cfg = default_config(kind)
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.d == 2
    with pytest.raises(ValueError, match="unknown experiment kind"):
        default_config("nope")


def test_build_measure_cantor_square():
    cfg = default_config("pieces")
    mu, info = build_measure(cfg)
    # s_target = 2 log 2 / log 3 makes the middle-thirds ratio exact
    assert info["ratio"] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert info["atom_scale"] <= min(cfg.eps_list) / 10.0 + 1e-12
    assert mu.dim == 2
    assert mu.total_mass == pytest.approx(1.0, rel=1e-9)


def test_build_measure_depth_guard():
    with pytest.raises(ValueError, match="underresolved"):
        build_measure(_cfg("pieces", depth=2))


def test_build_measure_requires_planar_recipes():
    cfg = _cfg("pieces", d=3, grid_origin=(-0.75, -0.75, -0.75))
    with pytest.raises(ValueError, match="d = 2"):
        build_measure(cfg)


def test_build_measure_glued_blob_row_at_unit_distance():
    cfg = _cfg(
        "sharp-threshold",
        measure_recipe="cantor_dirac_lebesgue",
        s_target=LOG2_3,
        eps_list=tuple(2.0 ** -e for e in range(6, 11)),
    )
    mu, info = build_measure(cfg)
    assert info["glued_blob"] is True
    blob = mu.points[:, 1] > 0.5
    rows = np.unique(mu.points[blob, 1])
    # one lattice row must land exactly at unit distance from the line,
    # otherwise the tangent scaling cuts off at the lattice spacing
    assert np.any(rows == 1.0)
    assert mu.weights[~blob].sum() == pytest.approx(0.8, rel=1e-9)
    assert mu.total_mass == pytest.approx(1.0, rel=1e-9)


def test_sharpness_main_inside_and_outside_pairs():
    rep = run_sharpness_main(default_config("sharp-main"))
    assert rep.verdict == "consistent"
    inside = rep.claims[rep.primary]
    assert inside.extras["side"] == "inside"
    assert inside.verdict == "consistent"
    assert inside.slope >= -0.05
    outside = rep.claims["ratio_p2_q5"]
    assert outside.extras["side"] == "outside"
    assert outside.verdict == "consistent"
    assert outside.slope <= -0.05
    # both probe pairs sit safely away from the predicted sign-change line
    assert inside.extras["line_distance"] >= 0.1
    assert outside.extras["line_distance"] >= 0.1
    assert 1.1 <= rep.measured_exponents["a_ball"] <= 1.35
    assert 0.7 <= rep.measured_exponents["b_annulus"] <= 0.93


def test_threshold_decays_below_critical_dimension():
    cfg = _cfg(
        "sharp-threshold",
        s_target=1.0 + math.log(2.0) / math.log(10.0),
        eps_list=tuple(2.0 ** -e for e in range(8, 13)),
        probe_size=2048,
    )
    rep = run_threshold_s(cfg)
    assert rep.verdict == "consistent"
    sup = rep.claims["sup_value"]
    assert sup.slope <= -0.05
    assert abs(sup.slope - sup.predicted_slope) <= sup.tolerance
    assert 1.2 <= rep.measured_exponents["s_fit"] <= 1.4


def test_threshold_glued_blob_variant():
    cfg = _cfg(
        "sharp-threshold",
        measure_recipe="cantor_dirac_lebesgue",
        s_target=LOG2_3,
        eps_list=tuple(2.0 ** -e for e in range(6, 11)),
    )
    rep = run_threshold_s(cfg)
    assert "glued-blob" in rep.flags
    sup = rep.claims["sup_value"]
    assert sup.verdict == "consistent"
    assert -0.9 <= sup.slope <= -0.4
    assert 0.55 <= rep.measured_exponents["s_line"] <= 0.7
    # most probes see no mass change, so the median fit degenerates
    assert any("median_value" in err for err in rep.errors)


def test_sharpness_second_predictions_match():
    cfg = _cfg(
        "sharp-second",
        eps_list=tuple(2.0 ** -e for e in range(3, 7)),
        pairs=((4.0, 2.0), (2.0, 4.0)),
    )
    rep = run_sharpness_second(cfg)
    assert rep.verdict == "consistent"
    ratio_keys = [k for k in rep.claims if k.startswith("ratio_")]
    assert len(ratio_keys) == 3
    for key in ratio_keys:
        claim = rep.claims[key]
        assert claim.verdict == "consistent"
        assert abs(claim.slope - claim.predicted_slope) <= 0.15
    assert 1.1 <= rep.measured_exponents["a_ball"] <= 1.35


def test_piece_norm_bounds_small_grid():
    cfg = _cfg(
        "pieces",
        grid_per_axis=1024,
        eps_list=tuple(2.0 ** -e for e in range(3, 6)),
        epsilon=2.0 ** -5,
        k_range=(2, 3, 4, 5, 6),
    )
    rep = run_piece_norms(cfg)
    assert rep.verdict == "consistent"
    assert rep.primary == "l2_to_l2"
    for key in ("l2_to_l2", "l1_to_linf", "l1_to_l2", "weak_l1"):
        claim = rep.claims[key]
        assert claim.one_sided
        assert claim.verdict == "consistent"


def test_l2_average_small_measure():
    cfg = _cfg(
        "lemma-l2avg",
        eps_list=tuple(2.0 ** -e for e in range(1, 4)),
        epsilon=2.0 ** -3,
    )
    rep = run_lemma_l2avg(cfg)
    claim = rep.claims["l2_average"]
    assert rep.verdict == "consistent"
    assert claim.one_sided
    assert claim.slope <= claim.predicted_slope + claim.tolerance


def test_disjointness_decay_stable_across_resolution():
    fine = run_lemma_disjoint(default_config("lemma-disjoint"))
    coarse = run_lemma_disjoint(_cfg("lemma-disjoint", grid_per_axis=512))
    for rep in (fine, coarse):
        assert rep.verdict == "consistent"
        assert rep.claims["off_band"].slope <= -4.0
        assert rep.checks["all_off_below_on"]
    gap = abs(fine.claims["off_band"].slope - coarse.claims["off_band"].slope)
    assert gap <= 1.0


def test_cover_checks_three_scales():
    rep = run_lemma_cover(default_config("lemma-cover"))
    assert rep.verdict == "consistent"
    assert len(rep.checks) == 9
    assert all(rep.checks.values())
    assert len(rep.tables["vitali"]["deltas"]) == 3


def test_cover_empty_subset_records_errors():
    rep = run_lemma_cover(_cfg("lemma-cover", subset_box=((0.9, 0.95), (0.9, 0.95))))
    assert rep.verdict == "inconclusive"
    assert len(rep.errors) == 3
    assert all("empty set" in err for err in rep.errors)
    assert rep.checks == {}


def test_lemma_suite_namespaces_results():
    cfg = _cfg(
        "lemma-disjoint",
        eps_list=tuple(2.0 ** -e for e in range(2, 5)),
        epsilon=2.0 ** -4,
    )
    rep = run_lemma_suite(cfg)
    assert rep.verdict == "consistent"
    assert rep.primary == "disjoint.off_band"
    assert set(rep.claims) == {"disjoint.off_band", "l2avg.l2_average"}
    assert rep.checks["disjoint.all_off_below_on"]
    cover_checks = [k for k in rep.checks if k.startswith("cover.")]
    assert len(cover_checks) == 9


def _stub_claim(verdict):
    return ScalingReport(
        slope=0.0,
        intercept=0.0,
        r2=1.0,
        samples=[],
        abscissa_kind="log2_eps",
        verdict=verdict,
    )


def test_report_verdict_precedence():
    rep = ExperimentReport(name="x", kind="k", config={})
    assert rep.verdict == "inconclusive"
    rep.checks["ok"] = True
    assert rep.verdict == "consistent"
    rep.checks["bad"] = False
    assert rep.verdict == "violated"
    rep = ExperimentReport(name="x", kind="k", config={})
    rep.claims["a"] = _stub_claim("inconclusive")
    assert rep.verdict == "inconclusive"
    rep.claims["b"] = _stub_claim("consistent")
    assert rep.verdict == "consistent"
    rep.claims["c"] = _stub_claim("violated")
    assert rep.verdict == "violated"


def test_degenerate_scaling_records_error():
    cfg = _cfg("sharp-second", eps_list=(0.125, 0.0625, 0.03125), pairs=())
    rep = run_sharpness_second(cfg)
    assert rep.verdict == "inconclusive"
    assert rep.errors
    assert rep.claims["ratio_p2_q2"].extras.get("degenerate") is True
