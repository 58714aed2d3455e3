"""Command-line driver.

Subcommands build recipe measures, run the lemma and sharpness
experiments, estimate dyadic piece norms, and emit exponent diagrams.
Every run writes <out>/report.json plus two-column CSV sample files;
the exit code is 0 when no claim is violated, 1 when one is, and 2 on
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .diagram import (
    RieszPoint,
    endpoints_main,
    endpoints_second,
    in_region,
    sharpness_line_main,
    sharpness_line_second,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    build_measure,
    default_config,
    run_lemma_cover,
    run_lemma_disjoint,
    run_lemma_l2avg,
    run_piece_norms,
    run_sharpness_main,
    run_sharpness_second,
    run_threshold_s,
)
from .measures import frostman_fit, save_measure

__all__ = ["main"]


def _sanitize(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to text."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    return obj


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for a, b in rows:
        lines.append(f"{a},{b}")
    path.write_text("\n".join(lines) + "\n")


def _emit(report: ExperimentReport, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for key in sorted(report.claims):
        rep = report.claims[key]
        name = key.replace(".", "_") + ".csv"
        _write_csv(out_dir / name, (rep.abscissa_kind, "log2_value"), rep.samples)
        artifacts.append(name)
    report.artifacts = artifacts
    payload = _sanitize(report.to_json_dict())
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    )
    for key in sorted(report.claims):
        rep = report.claims[key]
        pred = "none" if rep.predicted_slope is None else f"{rep.predicted_slope:+.4f}"
        bound = "<=" if rep.one_sided else "+-"
        print(f"[{rep.verdict}] {key}: slope {rep.slope:+.4f} "
              f"predicted {pred} ({bound} {rep.tolerance:g})")
    for key in sorted(report.checks):
        print(f"[{'pass' if report.checks[key] else 'FAIL'}] {key}")
    for err in report.errors:
        print(f"[error] {err}")
    print(f"verdict: {report.verdict}")
    return 0 if report.verdict != "violated" else 1


def _run_measure(config: ExperimentConfig, check: bool, out_dir: Path) -> int:
    t0 = time.time()
    mu, info = build_measure(config)
    report = ExperimentReport(
        name=config.name, kind="measure-check" if check else "measure-build",
        config=config.to_json_dict(),
    )
    report.tables["measure"] = {
        "label": mu.label, "n_atoms": mu.n_atoms, "total_mass": mu.total_mass,
        "diameter": mu.diameter(), "ratio": info["ratio"], "depth": info["depth"],
        "atom_scale": info["atom_scale"],
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    if check:
        fr = frostman_fit(mu)
        report.measured_exponents["s_fit"] = fr.s_exponent
        report.tables["frostman"] = fr.to_json_dict()
        if fr.unreliable:
            report.flags.append("unreliable-fit")
        _write_csv(out_dir / "frostman.csv", ("log2_r", "log2_mass"), fr.samples)
        report.artifacts.append("frostman.csv")
    else:
        save_measure(mu, out_dir / "measure.json")
        report.artifacts.append("measure.json")
    report.runtime_seconds = time.time() - t0
    payload = _sanitize(report.to_json_dict())
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    )
    print(f"verdict: {report.verdict}")
    return 0


def _run_diagram(config: ExperimentConfig, out_dir: Path) -> int:
    t0 = time.time()
    report = ExperimentReport(
        name=config.name, kind="diagram", config=config.to_json_dict(),
    )
    d, s, alpha = config.d, config.s_target, config.alpha
    regions = {
        "main": endpoints_main(d, s, alpha),
        "main_lower": endpoints_main(d, s, alpha, with_lower_bound=True),
        "second": endpoints_second(d, s, alpha),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, region in regions.items():
        report.tables[name] = region.to_json_dict()
        if not region.valid:
            report.flags.append(f"invalid-region:{name}")
            continue
        _write_csv(out_dir / f"{name}_vertices.csv", ("inv_p", "inv_q"),
                   [(v.inv_p, v.inv_q) for v in region.vertices])
        report.artifacts.append(f"{name}_vertices.csv")

    lines = {}
    try:
        sloped, vertical = sharpness_line_main(d, s, config.k_sphere)
        lines["main"] = {"intercept": sloped.intercept, "slope": sloped.slope,
                        "vertical": vertical}
        if regions["main_lower"].valid:
            ok = True
            for iq in np.linspace(0.0, 1.0, 41):
                for ip in np.linspace(0.0, 1.0, 41):
                    pt = RieszPoint(float(ip), float(iq))
                    if in_region(regions["main_lower"], pt):
                        if not (sloped.satisfied(pt, tol=1e-6)
                                and ip <= vertical + 1e-6):
                            ok = False
            report.checks["main_inside_sharp_lines"] = ok
    except ValueError as exc:
        report.errors.append(f"main lines: {exc}")
    try:
        line2 = sharpness_line_second(d, s, alpha)
        lines["second"] = {"intercept": line2.intercept, "slope": line2.slope}
        if regions["second"].valid:
            ok = True
            for iq in np.linspace(0.0, 1.0, 41):
                for ip in np.linspace(0.0, 1.0, 41):
                    pt = RieszPoint(float(ip), float(iq))
                    if in_region(regions["second"], pt) and not line2.satisfied(
                        pt, tol=1e-6
                    ):
                        ok = False
            report.checks["second_inside_sharp_line"] = ok
    except ValueError as exc:
        report.errors.append(f"second line: {exc}")
    report.tables["sharpness_lines"] = lines
    report.runtime_seconds = time.time() - t0
    payload = _sanitize(report.to_json_dict())
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    )
    for key in sorted(report.checks):
        print(f"[{'pass' if report.checks[key] else 'FAIL'}] {key}")
    print(f"verdict: {report.verdict}")
    return 0 if report.verdict != "violated" else 1


_DISPATCH = {
    ("lemma", "l2avg"): ("lemma-l2avg", run_lemma_l2avg),
    ("lemma", "disjoint"): ("lemma-disjoint", run_lemma_disjoint),
    ("lemma", "cover"): ("lemma-cover", run_lemma_cover),
    ("pieces", None): ("pieces", run_piece_norms),
    ("sharp", "main"): ("sharp-main", run_sharpness_main),
    ("sharp", "threshold"): ("sharp-threshold", run_threshold_s),
    ("sharp", "second"): ("sharp-second", run_sharpness_second),
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file overriding config fields")
    common.add_argument("--out", default="fraver_out", help="report directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--grid", type=int, default=None,
                        help="grid cells per axis override")

    parser = argparse.ArgumentParser(
        prog="fraver",
        description="numerical workbench for fractal averaging operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    measure = sub.add_parser("measure", help="build or check a recipe measure")
    msub = measure.add_subparsers(dest="subcommand", required=True)
    msub.add_parser("build", parents=[common])
    msub.add_parser("check", parents=[common])

    lemma = sub.add_parser("lemma", help="transform-average, band-decay and covering checks")
    lsub = lemma.add_subparsers(dest="subcommand", required=True)
    for name in ("l2avg", "disjoint", "cover"):
        lsub.add_parser(name, parents=[common])

    sub.add_parser("pieces", parents=[common], help="dyadic piece norm growth")

    sharp = sub.add_parser("sharp", help="sharpness example protocols")
    ssub = sharp.add_subparsers(dest="subcommand", required=True)
    for name in ("main", "threshold", "second"):
        ssub.add_parser(name, parents=[common])

    sub.add_parser("diagram", parents=[common], help="exponent region export")
    return parser


def _load_config(kind: str, args) -> ExperimentConfig:
    cfg = default_config(kind)
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        cfg = ExperimentConfig.from_dict(data, base=cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid is not None:
        overrides["grid_per_axis"] = args.grid
    if overrides:
        cfg = ExperimentConfig.from_dict(overrides, base=cfg)
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    key = (args.command, getattr(args, "subcommand", None))
    try:
        if args.command == "measure":
            cfg = _load_config("measure", args)
            return _run_measure(cfg, check=args.subcommand == "check",
                                out_dir=Path(args.out))
        if args.command == "diagram":
            cfg = _load_config("diagram", args)
            return _run_diagram(cfg, Path(args.out))
        kind, runner = _DISPATCH[key]
        cfg = _load_config(kind, args)
        report = runner(cfg)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return _emit(report, Path(args.out))


if __name__ == "__main__":
    sys.exit(main())
