"""Figures for benchmark output."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"grid": "0.45", "planes": "tab:blue", "pca": "tab:green",
          "ann9": "tab:red", "ann4": "tab:orange"}
MARKERS = {"grid": "s", "planes": "o", "pca": "D", "ann9": "^", "ann4": "v"}
# keeps PNG bytes independent of the matplotlib version string
PNG_METADATA = {"Software": None}


def pretty_plot(width=6.0, height=None):
    golden_ratio = (np.sqrt(5) - 1.0) / 2.0
    height = height or width * golden_ratio
    plt.rcParams.update({"font.size": 10, "axes.labelsize": 11, "legend.fontsize": 9,
                         "axes.spines.top": False, "axes.spines.right": False})
    fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def plot_scaling(points, path, noise_sigma=None):
    """sigma against measurements per prediction, log-log."""
    fig, ax = pretty_plot()
    grid = sorted((p for p in points if p.method == "grid"), key=lambda p: p.n_measurements)
    if grid:
        ax.plot([p.n_measurements for p in grid], [p.sigma for p in grid], "-",
                color=COLORS["grid"], marker=MARKERS["grid"], label="grid search")
    for p in points:
        if p.method == "grid":
            continue
        ax.scatter(p.n_measurements, p.sigma, color=COLORS[p.method], marker=MARKERS[p.method],
                   s=50, zorder=3, label=p.label)
    if noise_sigma:
        ax.axhline(noise_sigma, color="k", lw=0.8, ls="--", label="measurement noise")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("measurements per prediction")
    ax.set_ylabel(r"$\sigma$ (field units)")
    ax.legend(frameon=False, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def plot_spread(points, path, noise_sigma):
    """One circle per method, diameter proportional to sigma / noise_sigma."""
    methods = [p for p in points if p.method != "grid"]
    grid = [p for p in points if p.method == "grid"]
    if grid:
        methods.append(min(grid, key=lambda p: abs(p.sigma - noise_sigma)))
    fig, ax = pretty_plot(width=7.0, height=2.6)
    for i, p in enumerate(methods):
        r = 0.4 * p.sigma / noise_sigma
        ax.add_patch(plt.Circle((i, 0), min(r, 0.48), fill=False, lw=1.5, color=COLORS[p.method]))
        ax.text(i, -0.62, f"{p.label}\n{p.sigma / noise_sigma:.2f}", ha="center", va="top", fontsize=8)
    ax.add_patch(plt.Circle((len(methods), 0), 0.4, fill=False, lw=1, ls="--", color="k"))
    ax.text(len(methods), -0.62, "noise\n1.00", ha="center", va="top", fontsize=8)
    ax.set_xlim(-0.6, len(methods) + 0.6)
    ax.set_ylim(-1.2, 0.6)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def summary_table(points, noise_sigma=None):
    rows = [f"{'method':<12}{'meas.':>8}{'train':>7}{'sigma':>12}{'c68':>7}"]
    for p in points:
        rows.append(f"{p.label:<12}{p.n_measurements:>8}{p.amortized_training_measurements:>7}"
                    f"{p.sigma:>12.6g}{p.containment_68:>7.3f}")
    if noise_sigma:
        rows.append(f"(noise_sigma = {noise_sigma:g})")
    return "\n".join(rows)
