"""Report rendering: aligned text tables, record CSVs, and figures.

Everything here is byte-deterministic for identical inputs: floats are
written with a fixed format, rows keep a fixed order, and figures are
rendered through the Agg backend with no timestamps embedded.
"""

from __future__ import annotations

import csv
import logging
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import CVReport, MNResult, ProfileCurve
from .pairing import PairStats

log = logging.getLogger(__name__)

FIGURE_DPI = 100


def fmt(x, digits: int = 4) -> str:
    """Fixed-width-friendly value formatting for the text report."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.{digits}f}"
    return str(x)


def fmt_csv(x) -> str:
    """Exact CSV value formatting; NaN becomes an empty field."""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.17g}"
    return str(x)


def text_table(rows: list[list], header: list[str] | None = None) -> str:
    """Left-aligned first column, right-aligned rest, two-space gutters."""
    cells = [[fmt(v) for v in row] for row in rows]
    if header is not None:
        cells.insert(0, list(header))
    widths = [max(len(r[c]) for r in cells) for c in range(len(cells[0]))]
    lines = []
    for r in cells:
        parts = [r[0].ljust(widths[0])]
        parts += [r[c].rjust(widths[c]) for c in range(1, len(r))]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


def write_records_csv(records: list[tuple[str, str, object]], path) -> None:
    """Machine-readable mirror of the text report: section,key,value rows."""
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["section", "key", "value"])
        for section, key, value in records:
            writer.writerow([section, key, fmt_csv(value)])


def write_profile_csv(curve: ProfileCurve, path, x_name: str = "x") -> None:
    """Plot-ready columns for one curve: x, mean, CI bounds, count."""
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow([x_name, "mean", "ci_low", "ci_high", "count"])
        for i in range(len(curve.x)):
            writer.writerow([
                int(curve.x[i]), fmt_csv(float(curve.mean[i])),
                fmt_csv(float(curve.ci_low[i])), fmt_csv(float(curve.ci_high[i])),
                int(curve.count[i]),
            ])


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=FIGURE_DPI, metadata={"Date": None})
    plt.close(fig)


def profile_figure(curve: ProfileCurve, path, title: str, xlabel: str,
                   bars: bool = False) -> None:
    """Mean-with-CI figure for one profile curve."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = curve.x.astype(float)
    if bars:
        ax.bar(x, curve.mean, color="#4878a8")
        ok = np.isfinite(curve.ci_low)
        ax.errorbar(x[ok], curve.mean[ok],
                    yerr=(curve.mean[ok] - curve.ci_low[ok]),
                    fmt="none", ecolor="#333333", capsize=3)
    else:
        ax.plot(x, curve.mean, color="#4878a8", linewidth=1.5)
        ok = np.isfinite(curve.ci_low)
        ax.fill_between(x[ok], curve.ci_low[ok], curve.ci_high[ok],
                        color="#4878a8", alpha=0.25, linewidth=0)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mean score")
    fig.tight_layout()
    save_figure(fig, path)


def score_distribution_figure(scores: np.ndarray, path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.hist(scores, bins=60, color="#4878a8")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel("score")
    ax.set_ylabel("submissions (log)")
    fig.tight_layout()
    save_figure(fig, path)


def cv_accuracy_figure(report: CVReport, path, baselines: dict[str, float] | None = None) -> None:
    """Per-split accuracies with the mean and its confidence band."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    xs = np.arange(1, len(report.accuracies) + 1)
    ax.scatter(xs, report.accuracies, color="#4878a8", zorder=3, label="split accuracy")
    ax.axhline(report.mean, color="#333333", linewidth=1.2, label="mean")
    if math.isfinite(report.ci_half_width):
        ax.axhspan(report.mean - report.ci_half_width,
                   report.mean + report.ci_half_width,
                   color="#4878a8", alpha=0.2, linewidth=0)
    for name, value in (baselines or {}).items():
        ax.axhline(value, linestyle="--", linewidth=1.0, color="#a85048")
        ax.annotate(name, (0.6, value), fontsize=8, color="#a85048",
                    va="bottom")
    ax.set_title("cross-validation accuracy")
    ax.set_xlabel("split")
    ax.set_ylabel("pair accuracy")
    ax.set_xticks(xs)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    save_figure(fig, path)


def group_share_figure(shares: dict[str, float], path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    names = list(shares)
    vals = [shares[n] for n in names]
    ax.bar(np.arange(len(names)), vals, color="#4878a8")
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_title("absolute weight share by feature group")
    ax.set_ylabel("share")
    fig.tight_layout()
    save_figure(fig, path)


# ---------------------------------------------------------------------------
# report sections

def cv_section(report: CVReport, baselines: dict[str, float] | None = None):
    """(text, records) for a cross-validation report."""
    lines = ["== cross-validation ==",
             text_table([
                 ["pairs", report.n_pairs],
                 ["splits", report.n_splits],
                 ["test fraction", report.test_fraction],
                 ["mean accuracy", report.mean],
                 ["95% CI half-width", report.ci_half_width],
             ]).rstrip()]
    records = [
        ("cv", "n_pairs", report.n_pairs),
        ("cv", "n_splits", report.n_splits),
        ("cv", "test_fraction", report.test_fraction),
        ("cv", "mean_accuracy", report.mean),
        ("cv", "ci_half_width", report.ci_half_width),
    ]
    for i, acc in enumerate(report.accuracies):
        records.append(("cv_split", str(i), acc))
    lines.append("per-split: " + " ".join(fmt(a) for a in report.accuracies))
    for name, value in (baselines or {}).items():
        lines.append(f"baseline {name}: {fmt(value)}")
        records.append(("baseline", name, value))
    if report.group_shares:
        lines.append("")
        lines.append("weight share by group:")
        rows = [[name, share] for name, share in report.group_shares.items()]
        lines.append(text_table(rows).rstrip())
        for name, share in report.group_shares.items():
            records.append(("group_share", name, share))
    return "\n".join(lines) + "\n", records


def pair_stats_section(stats: PairStats):
    rows = [
        ["pairs", stats.n_pairs],
        ["mean gap (s)", stats.mean_gap],
        ["median gap (s)", stats.median_gap],
        ["mean score diff", stats.mean_score_diff],
        ["median score diff", stats.median_score_diff],
    ]
    text = "== pair sample ==\n" + text_table(rows)
    records = [
        ("pairs", "n_pairs", stats.n_pairs),
        ("pairs", "mean_gap", stats.mean_gap),
        ("pairs", "median_gap", stats.median_gap),
        ("pairs", "mean_score_diff", stats.mean_score_diff),
        ("pairs", "median_score_diff", stats.median_score_diff),
    ]
    return text, records


def moments_section(skew: float, kurtosis: float, mn: MNResult):
    rows = [
        ["score skewness", skew],
        ["score excess kurtosis", kurtosis],
        ["windowed-mean coverage (>=5 neighbors)", mn.covered_fraction],
        ["mean in-window neighbors", mn.mean_neighbors],
    ]
    text = "== score distribution ==\n" + text_table(rows)
    records = [
        ("scores", "skewness", skew),
        ("scores", "excess_kurtosis", kurtosis),
        ("scores", "mn_covered_fraction", mn.covered_fraction),
        ("scores", "mn_mean_neighbors", mn.mean_neighbors),
    ]
    return text, records
