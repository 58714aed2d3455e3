#!/usr/bin/env python3
"""Render saved experiment reports as static figures.

Reads a report.json written by the fraver command line and draws one
of three figure kinds: "riesz" shades the boundedness regions in the
(1/p, 1/q) square with open endpoint circles and the sharpness lines,
"scaling" plots each fitted log-log series next to its predicted
slope, and "decay-matrix" shows the dyadic pairing magnitudes as a
heatmap.  Rendering is read-only and deterministic; a malformed or
mismatched report exits with status 2 before any output is written.
"""

import argparse
import json
import math
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
# fixed salt so svg element ids do not change between runs
matplotlib.rcParams["svg.hashsalt"] = "fraver-plots"
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("riesz", "scaling", "decay-matrix")

# endpoint family -> ordinate of the marker at abscissa u = 1/p
_ENDPOINT_ORDINATE = {
    "dual": lambda u: 1.0 - u,
    "l2": lambda u: 0.5,
    "self": lambda u: u,
}

_REGION_STYLE = {
    "main": ("tab:blue", "main region"),
    "main_lower": ("tab:green", "with lower bound"),
    "second": ("tab:orange", "second kind"),
}


class ReportError(ValueError):
    """Report does not carry what the requested figure kind needs."""


@dataclass(frozen=True)
class FigureJob:
    report_path: str
    figure_kind: str
    out_path: str


def _load_report(path):
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ReportError("report root must be a JSON object")
    return data


def _riesz_figure(report):
    tables = report.get("tables", {})
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    drawn = 0
    for name, (color, label) in _REGION_STYLE.items():
        region = tables.get(name)
        if region is None or not region.get("valid", False):
            continue
        verts = region.get("vertices", [])
        if len(verts) < 3:
            continue
        xs = [v[0] for v in verts]
        ys = [v[1] for v in verts]
        ax.fill(xs, ys, color=color, alpha=0.15, zorder=1)
        ax.plot(xs + xs[:1], ys + ys[:1], color=color, lw=1.2, label=label,
                zorder=2)
        for vx, vy in region.get("open_vertices", []):
            ax.plot([vx], [vy], marker="o", ms=4, mfc="white", mec=color,
                    ls="", gid="open-vertex", zorder=4)
        for ename, info in region.get("endpoints", {}).items():
            ordinate = _ENDPOINT_ORDINATE.get(ename)
            if ordinate is None:
                continue
            u = float(info["inv_p"])
            closed = bool(info.get("included", False))
            ax.plot([u], [ordinate(u)], marker="o", ms=7,
                    mfc=(color if closed else "white"), mec=color, ls="",
                    gid=("endpoint-closed" if closed else "endpoint-open"),
                    zorder=5)
        drawn += 1
    if drawn == 0:
        raise ReportError("no valid region tables to draw")

    lines = tables.get("sharpness_lines", {})
    iq = np.array([0.0, 1.0])
    if "main" in lines:
        main = lines["main"]
        ax.plot(main["intercept"] + main["slope"] * iq, iq, color="black",
                ls="--", lw=1.0, label="sharp line")
        ax.axvline(main["vertical"], color="black", ls=":", lw=1.0,
                   label="vertical cut")
    if "second" in lines:
        sec = lines["second"]
        ax.plot(sec["intercept"] + sec["slope"] * iq, iq, color="gray",
                ls="--", lw=1.0, label="second line")

    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_aspect("equal")
    ax.set_xlabel("1/p")
    ax.set_ylabel("1/q")
    cfg = report.get("config", {})
    ax.set_title(
        "%s: d=%s, s=%.3f, alpha=%.2f"
        % (report.get("name", "report"), cfg.get("d", "?"),
           float(cfg.get("s_target", float("nan"))),
           float(cfg.get("alpha", float("nan"))))
    )
    ax.legend(loc="lower right", fontsize=8)
    return fig


def _scaling_figure(report):
    claims = {
        name: claim
        for name, claim in report.get("claims", {}).items()
        if claim.get("samples")
    }
    if not claims:
        raise ReportError("no claims with samples to draw")
    names = sorted(claims)
    ncols = 2 if len(names) > 1 else 1
    nrows = math.ceil(len(names) / ncols)
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(4.8 * ncols, 3.4 * nrows),
                             squeeze=False)
    for ax in axes.flat[len(names):]:
        ax.set_visible(False)
    for ax, name in zip(axes.flat, names):
        claim = claims[name]
        # degenerate bins are serialized as "-inf" strings; float() accepts them
        xs = np.array([float(s[0]) for s in claim["samples"]])
        ys = np.array([float(s[1]) for s in claim["samples"]])
        finite = np.isfinite(ys)
        ax.plot(xs[finite], ys[finite], "o", ms=4, color="tab:blue",
                label="samples")
        slope = claim.get("slope")
        intercept = claim.get("intercept")
        if slope is not None and finite.sum() >= 2:
            grid = np.array([xs[finite].min(), xs[finite].max()])
            ax.plot(grid, intercept + slope * grid, color="tab:blue", lw=1.0,
                    label="fit %+.3f" % slope)
            pred = claim.get("predicted_slope")
            if isinstance(pred, (int, float)):
                anchor = intercept + slope * grid[0]
                ax.plot(grid, anchor + pred * (grid - grid[0]),
                        color="tab:red", ls="--", lw=1.0,
                        label="predicted %+.3f" % pred)
        ax.set_title("%s [%s]" % (name, claim.get("verdict", "?")), fontsize=9)
        ax.set_xlabel(claim.get("abscissa_kind", "abscissa"), fontsize=8)
        ax.set_ylabel("log2 value", fontsize=8)
        ax.legend(fontsize=7)
    fig.suptitle(report.get("name", "report"))
    fig.tight_layout()
    return fig


def _decay_figure(report):
    table = report.get("tables", {}).get("decay_matrix")
    if table is None:
        raise ReportError("report has no decay_matrix table")
    matrix = np.array(table["matrix"], dtype=float)
    positive = matrix[matrix > 0]
    if positive.size == 0:
        raise ReportError("decay matrix has no positive entries")
    floor = positive.min() / 2.0
    logs = np.log2(np.maximum(matrix, floor))
    j_range = [int(j) for j in table["j_range"]]
    k_range = [int(k) for k in table["k_range"]]

    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    im = ax.imshow(
        logs, origin="lower",
        extent=(k_range[0] - 0.5, k_range[-1] + 0.5,
                j_range[0] - 0.5, j_range[-1] + 0.5),
    )
    fig.colorbar(im, ax=ax, label="log2 |pairing|")
    band = int(table.get("band", 2))
    kk = np.array([k_range[0] - 0.5, k_range[-1] + 0.5])
    for off in (band, -band):
        ax.plot(kk, kk + off, color="white", ls="--", lw=1.0)
    ax.set_xlim(k_range[0] - 0.5, k_range[-1] + 0.5)
    ax.set_ylim(j_range[0] - 0.5, j_range[-1] + 0.5)
    ax.set_xlabel("input shell k")
    ax.set_ylabel("output shell j")
    fit = table.get("off_band_fit", {})
    ax.set_title(
        "%s: off-band slope %+.2f, off below on: %s"
        % (report.get("name", "report"),
           float(fit.get("slope", float("nan"))),
           table.get("all_off_below_on"))
    )
    return fig


_BUILDERS = {
    "riesz": _riesz_figure,
    "scaling": _scaling_figure,
    "decay-matrix": _decay_figure,
}


def build_figure(report, kind):
    if kind not in _BUILDERS:
        raise ReportError("unknown figure kind: %s" % kind)
    return _BUILDERS[kind](report)


def render(job: FigureJob) -> None:
    suffix = job.out_path.rsplit(".", 1)[-1].lower() if "." in job.out_path else ""
    if suffix not in ("png", "svg"):
        raise ReportError("output path must end in .png or .svg")
    report = _load_report(job.report_path)
    fig = build_figure(report, job.figure_kind)
    try:
        # svg embeds a creation date unless suppressed; png does not
        metadata = {"Date": None} if suffix == "svg" else None
        fig.savefig(job.out_path, dpi=150, format=suffix, metadata=metadata)
    finally:
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="render a saved report as a static figure"
    )
    parser.add_argument("--report", required=True, help="report.json path")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output .png or .svg path")
    args = parser.parse_args(argv)
    job = FigureJob(report_path=args.report, figure_kind=args.kind,
                    out_path=args.out)
    try:
        render(job)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print("render error: %s" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
