"""Static SVG scatter of a bifurcation diagram.

The output is byte-stable for identical inputs: the SVG hash salt is fixed and
the date metadata is dropped.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bifurcation import BifurcationDiagram  # noqa: E402

__all__ = ["diagram_svg"]

POINTS_PER_INCH = 72
Y_RESOLUTION = 1e-4


def diagram_svg(diagram: BifurcationDiagram, width: int = 1200, height: int = 800,
                ylim: tuple[float, float] | None = None, alpha_star: float | None = None) -> str:
    """Render ``alpha`` against the kept states; ``ylim`` fixes the vertical axis.

    The SVG canvas is ``width`` x ``height`` points. States are rounded to 1e-4
    and duplicates at the same ``alpha`` are drawn once.
    """
    with plt.rc_context({"svg.hashsalt": "noisypbc", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(width / POINTS_PER_INCH, height / POINTS_PER_INCH),
                               dpi=POINTS_PER_INCH)
        n_keep, n_orbits = diagram.samples.shape[1:]
        xs = np.repeat(diagram.alphas, n_keep * n_orbits)
        ys = diagram.samples.ravel()
        ok = np.isfinite(ys)
        pts = np.unique(np.column_stack([xs[ok], np.round(ys[ok] / Y_RESOLUTION)]), axis=0)
        ax.plot(pts[:, 0], pts[:, 1] * Y_RESOLUTION, ",", color="black")
        ax.set_xlim(float(diagram.alphas[0]), float(diagram.alphas[-1]))
        if ylim is not None:
            ax.set_ylim(*ylim)
        if alpha_star is not None:
            ax.axvline(alpha_star, color="tab:red", linewidth=0.8)
        title = diagram.map_label + (f", noise {diagram.noise} ell={diagram.ell:g}" if diagram.noisy else ", no noise")
        ax.set_title(title)
        ax.set_xlabel("alpha")
        ax.set_ylabel("x")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
