"""Render median/IQR spectral-efficiency curves from a sweep table."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .table import load_table, median_iqr_curves

# fixed styles so that repeated runs produce identical bytes; SVG keeps text as
# text elements so annotations stay greppable
matplotlib.rcParams["svg.hashsalt"] = "sweepfig"
matplotlib.rcParams["svg.fonttype"] = "none"
_STYLE = {
    "bd": dict(color="#1f77b4", marker="o", label="BD-RIS"),
    "d": dict(color="#d62728", marker="s", label="D-RIS"),
    "none": dict(color="#2ca02c", marker="^", label="conventional"),
}
_AXIS_LABEL = {
    "N": "passive elements N",
    "M": "active antennas M",
    "K": "users K",
}


def format_gain(reference: float, other: float) -> str:
    """Relative gain of `reference` over `other`, e.g. +15.0%."""
    return f"{(reference - other) / other * 100:+.1f}%"


def plot_se_vs_axis(csv_path: str | Path, axis: str, out_path: str | Path) -> list[Path]:
    """One curve per architecture with an IQR band; writes PNG and SVG siblings.

    BD-RIS rows, when present, get a relative-gain annotation against the other
    curve (D-RIS when available, otherwise the conventional baseline).
    """
    table = load_table(csv_path, axis)
    curves = median_iqr_curves(table, axis)

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for arch in table.architectures:
        stats = curves[arch]
        style = _STYLE.get(arch, dict(marker="x", label=arch))
        ax.plot(stats.index, stats["median"], linewidth=1.8, **style)
        ax.fill_between(
            stats.index, stats["q1"], stats["q3"],
            color=style.get("color"), alpha=0.18, linewidth=0,
        )

    comparison = next((a for a in ("d", "none") if a in curves), None)
    if "bd" in curves and comparison is not None:
        bd = curves["bd"]["median"]
        other = curves[comparison]["median"]
        for x in bd.index.intersection(other.index):
            ax.annotate(
                format_gain(bd[x], other[x]),
                xy=(x, bd[x]),
                xytext=(0, 8),
                textcoords="offset points",
                ha="center",
                fontsize=8,
                color="#333333",
            )

    ax.set_xlabel(_AXIS_LABEL[axis])
    ax.set_ylabel("average SE per user [bits/s/Hz]")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    png = out_path if out_path.suffix == ".png" else out_path.with_suffix(".png")
    svg = out_path.with_suffix(".svg")
    fig.savefig(png, dpi=150, metadata={"Software": None})
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)
    return [png, svg]
