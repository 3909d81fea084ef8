"""Figures for the CLI reports, written as SVG next to the CSV tables."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so repeated runs give identical files
RC = {
    "svg.hashsalt": "hcrom",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
MARKERS = "osd^v<>p*h"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def _floor(e):
    # log axes cannot show exact zeros
    e = np.asarray(e, dtype=float)
    return np.where(e > 0, e, np.nan)


def error_curves(path, curves, title=""):
    """Two panels (Galerkin, H^1_0) of max relative error against ``n``.

    ``curves`` maps a label to ``(n, galerkin_err, h10_err)``.
    """
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.4), sharey=True)
        for i, (label, (n, eg, eh)) in enumerate(curves.items()):
            mk = MARKERS[i % len(MARKERS)]
            axes[0].semilogy(n, _floor(eg), marker=mk, label=label)
            axes[1].semilogy(n, _floor(eh), marker=mk, label=label)
        axes[0].set_title("Galerkin projection")
        axes[1].set_title(r"$H^1_0$ projection")
        for ax in axes:
            ax.set_xlabel("n")
        axes[0].set_ylabel("max relative $H^1_0$ error")
        axes[1].legend(loc="upper right")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def sweep_curves(path, panels):
    """Greedy-Galerkin error against ``n``, one panel per geometry, one curve per active dimension.

    ``panels`` maps geometry name to ``{d: (n, err)}``.
    """
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.4), sharey=True, squeeze=False)
        for ax, (geo, curves) in zip(axes[0], panels.items()):
            for i, (d, (n, e)) in enumerate(sorted(curves.items())):
                ax.semilogy(n, _floor(e), marker=MARKERS[i % len(MARKERS)], label=f"d={d}")
            ax.set_title(geo)
            ax.set_xlabel("n")
            ax.legend(loc="upper right")
        axes[0][0].set_ylabel("max relative Galerkin error")
        _save(fig, path)


def surrogate_curves(path, rows):
    """Global-space errors of the rectangle-cover construction against the degree ``k``."""
    glob = [r for r in rows if r["rectangle"] == "global"]
    k = [r["k"] for r in glob]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ax.semilogy(k, _floor([r["max_rel_err_h10"] for r in glob]), marker="o", label=r"$H^1_0$")
        ax.semilogy(k, _floor([r["max_rel_err_galerkin"] for r in glob]), marker="s", label="Galerkin")
        ax.semilogy(k, 3.0 ** -np.asarray(k, dtype=float), color="0.5", ls="--", label=r"$3^{-k}$")
        for r in glob:
            ax.annotate(f"n={r['n']}", (r["k"], r["max_rel_err_h10"]), textcoords="offset points",
                        xytext=(3, 4), fontsize=7)
        ax.set_xlabel("k")
        ax.set_ylabel("max relative error")
        ax.legend(loc="lower left")
        _save(fig, path)


def field(path, mesh, values, title=""):
    """Piecewise-linear field over the mesh (boundary values zero)."""
    full = np.zeros(len(mesh.vertices))
    idx = mesh.interior_dof_index
    full[idx >= 0] = np.asarray(values)[idx[idx >= 0]]
    with plt.rc_context({**RC, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        tpc = ax.tripcolor(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles, full,
                           shading="gouraud", cmap="viridis", rasterized=False)
        for t in (-0.5, 0.0, 0.5):
            ax.axhline(t, color="w", lw=0.4, alpha=0.6)
            ax.axvline(t, color="w", lw=0.4, alpha=0.6)
        fig.colorbar(tpc, ax=ax)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        _save(fig, path)


def pbdw_errors(path, rows):
    """Reconstruction errors per test case, ``u*`` and ``v*`` against the best-approximation error."""
    case = [r["case"] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        ax.semilogy(case, _floor([r["rel_err_v_star"] for r in rows]), "s", label=r"$v^*$")
        ax.semilogy(case, _floor([r["rel_err_u_star"] for r in rows]), "o", label=r"$u^*$")
        ax.semilogy(case, _floor([r["rel_dist_Vn"] for r in rows]), "k_", ms=10, label=r"dist$(\bar u, V_n)$")
        ax.set_xlabel("test case")
        ax.set_ylabel("relative $H^1_0$ error")
        ax.legend(loc="best")
        _save(fig, path)
