"""Figure rendering for report files.

Data files come first, figures second: every plot is derived from a report
JSON that any other tool could consume. SVG output is byte-deterministic
(fixed hash salt, no timestamp metadata).
"""

from __future__ import annotations

import json
import math
import os
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import DataError  # noqa: E402

_RC = {"svg.hashsalt": "surpsim", "figure.dpi": 100}


def save_svg(fig, path) -> str:
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return str(path)


def _placeholder(title: str, path) -> str:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.text(0.5, 0.5, "no data", ha="center", va="center", fontsize=14)
        ax.set_title(title)
        ax.set_axis_off()
    return save_svg(fig, path)


def plot_variance_report(report: dict, path) -> str:
    """Three stacked panels: coefficient of variation, correlation between
    resamples, and runtime, each against sample size (log2 x-axis)."""
    series = report.get("series", [])
    if not series:
        return _placeholder("variance report", path)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
        panels = (("mean_cv", "coefficient of variation"),
                  ("corr_mean", "correlation between resamples"),
                  ("seconds_per_stimulus", "seconds per stimulus"))
        for ax, (key, label) in zip(axes, panels):
            for entry in series:
                points = entry["points"]
                ns = [p["n"] for p in points]
                ys = [p.get(key, math.nan) for p in points]
                name = entry["measure"]
                if entry.get("max_len") is not None:
                    name = f"{name} (L={entry['max_len']})"
                ax.plot(ns, ys, marker="o", markersize=3, label=name)
            ax.set_ylabel(label)
            ax.set_xscale("log", base=2)
        exact = report.get("exact_seconds_per_stimulus")
        if exact is not None:
            axes[2].axhline(exact, linestyle="--", linewidth=1, color="gray",
                            label="exact path")
        axes[2].set_xlabel("sample size N")
        axes[0].legend(fontsize=7, ncol=2)
        fig.tight_layout()
    return save_svg(fig, path)


def plot_eval_reports(reports: Sequence[dict], path, title: str = "") -> str:
    """Horizontal bars of mean delta R-squared with 95% interval whiskers."""
    reports = [r for r in reports if r.get("kind") == "eval"]
    if not reports:
        return _placeholder(title or "delta R2", path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 0.5 * len(reports) + 1.5))
        labels = [r["label"] for r in reports]
        means = [r["mean_delta_r2"] for r in reports]
        lows = [r["ci95"][0] for r in reports]
        highs = [r["ci95"][1] for r in reports]
        ys = range(len(reports))
        colors = ["tab:blue" if r["p_value"] < 0.0001 else
                  ("tab:cyan" if r["p_value"] < 0.01 else "gray")
                  for r in reports]
        ax.barh(list(ys), means, color=colors)
        ax.errorbar(means, list(ys),
                    xerr=[[m - lo for m, lo in zip(means, lows)],
                          [hi - m for m, hi in zip(means, highs)]],
                    fmt="none", ecolor="black", capsize=2, linewidth=1)
        ax.axvline(0.0, color="red", linestyle=":", linewidth=1)
        ax.set_yticks(list(ys))
        ax.set_yticklabels(labels, fontsize=8)
        ax.invert_yaxis()
        ax.set_xlabel("delta R2 (out of sample)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
    return save_svg(fig, path)


def plot_correlation_matrix(report: dict, path) -> str:
    names = report.get("names", [])
    values = report.get("values", [])
    if not names:
        return _placeholder("correlation matrix", path)
    with plt.rc_context(_RC):
        side = max(4.0, 0.45 * len(names) + 1.5)
        fig, ax = plt.subplots(figsize=(side + 1.2, side))
        im = ax.imshow(values, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
        ax.set_xticks(range(len(names)))
        ax.set_yticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90, fontsize=7)
        ax.set_yticklabels(names, fontsize=7)
        for i in range(len(names)):
            for j in range(len(names)):
                v = values[i][j]
                if v == v:  # skip NaN cells
                    ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=5)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(report.get("method", ""))
        fig.tight_layout()
    return save_svg(fig, path)


def render_report_file(path, outdir) -> List[str]:
    """Render the figure(s) for one report JSON; returns written paths."""
    with open(path, encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(report, dict) or "kind" not in report:
        raise DataError(f"{path} is not a report file (missing 'kind')")
    stem = os.path.splitext(os.path.basename(path))[0]
    os.makedirs(outdir, exist_ok=True)
    out = os.path.join(outdir, f"{stem}.svg")
    kind = report["kind"]
    if kind == "variance":
        return [plot_variance_report(report, out)]
    if kind == "eval":
        return [plot_eval_reports([report], out, title=report.get("response", ""))]
    if kind == "eval_collection":
        return [plot_eval_reports(report.get("reports", []), out,
                                  title=report.get("response", ""))]
    if kind == "correlation":
        return [plot_correlation_matrix(report, out)]
    raise DataError(f"{path}: unknown report kind {kind!r}")
