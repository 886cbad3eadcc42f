"""Figure rendering for scenario outputs.

Each curve CSV written by a report gets a PNG next to it; the comb-arc
command also renders the arc geometry.  Figures are presentation only and
never enter the determinism hash.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_report", "render_curve", "render_arc"]

_STYLES = {
    "degree,residual": dict(xlabel="degree", ylabel="residual norm", logy=True,
                            title="best-fit residual vs degree"),
    "depth,value": dict(xlabel="dyadic depth", ylabel="partial value", logy=False,
                        title="refinement trace"),
    "segment,budget,achieved,met": dict(xlabel="segment", ylabel="squared error",
                                        logy=True, title="per-segment budgets"),
    "radius,ratio": dict(xlabel="radius", ylabel="max-circle ratio", logx=True,
                         title="Lelong ratio sequence"),
    "K,length": dict(xlabel="K", ylabel="arc length", logx=True,
                     title="truncated arc length"),
    "K,S": dict(xlabel="K", ylabel="partial sum", logx=True,
                title="lower-bound partial sums"),
    "n,norm_diff": dict(xlabel="n", ylabel="squared norm difference", logy=True,
                        title="peak modification size"),
    "case,value,bound,ok": dict(xlabel="case", ylabel="value / bound", logy=True,
                                title="bound checks"),
}


def render_curve(path_png: str, header: str, rows) -> str | None:
    if not rows:
        return None
    style = _STYLES.get(header, dict(xlabel=header.split(",")[0],
                                     ylabel=header.split(",")[1],
                                     title=header))
    data = np.asarray([[float(v) for v in row] for row in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if header == "segment,budget,achieved,met":
        x = data[:, 0]
        width = 0.38
        ax.bar(x - width / 2, data[:, 1], width, label="budget", color="#888888")
        ax.bar(x + width / 2, np.maximum(data[:, 2], 1e-300), width,
               label="achieved", color="#2c7fb8")
        ax.legend(fontsize=8)
    elif header == "case,value,bound,ok":
        ax.plot(data[:, 0], data[:, 1], ".", label="value", color="#2c7fb8")
        ax.plot(data[:, 0], data[:, 2], "-", label="bound", color="#888888")
        ax.legend(fontsize=8)
    else:
        ax.plot(data[:, 0], data[:, 1], "o-", ms=3, lw=1, color="#2c7fb8")
    if style.get("logy"):
        ax.set_yscale("log")
    if style.get("logx"):
        ax.set_xscale("log")
    ax.set_xlabel(style["xlabel"])
    ax.set_ylabel(style["ylabel"])
    ax.set_title(style["title"], fontsize=10)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path_png, dpi=130)
    plt.close(fig)
    return path_png


def render_arc(path_png: str, arc) -> str:
    v = arc.polyline.vertices
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(v.real, v.imag, "-", lw=0.5, color="#2c7fb8")
    for b, a in arc.atoms:
        ax.plot([b], [0.0], "r.", ms=4)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"comb arc, N={arc.N}, K={arc.K} (atoms marked)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path_png, dpi=130)
    plt.close(fig)
    return path_png


def render_report(out_dir: str, report, arc=None):
    """Render one PNG per curve CSV; the comb arc additionally gets its
    geometry picture."""
    written = []
    for name, header, rows in report.curves:
        png = os.path.join(out_dir, f"{name}.png")
        if render_curve(png, header, rows):
            written.append(png)
    if arc is not None:
        written.append(render_arc(os.path.join(out_dir, "arc.png"), arc))
    return written
