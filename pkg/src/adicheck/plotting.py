"""PNG figures for run and sweep output, rendered off-screen."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_run(arts, directory, title=""):
    """
    One figure per ordered pair with m < n (|A|, theta_dot, G against t) and
    one figure of the drift profiles of all initial states.
    """
    directory = Path(directory)
    t = arts.times
    paths = []
    for (m, n), cols in sorted(arts.pairs.items()):
        if m > n:
            continue
        fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
        axes[0].plot(t, cols["abs_A"], lw=1)
        axes[0].set_ylabel(r"$|A_{mn}|$")
        axes[1].plot(t, cols["theta_dot"], lw=1)
        axes[1].axhline(0.0, color="0.6", lw=0.8)
        axes[1].set_ylabel(r"$\dot\theta_{mn}$")
        axes[2].plot(t, cols["G"], lw=1)
        axes[2].set_ylabel(r"$|G_{mn}(t)|$")
        axes[2].set_xlabel("t")
        axes[0].set_title(f"{title}  pair ({m}, {n})")
        paths.append(_save(fig, directory / f"pair_{m}_{n}.png"))
    if arts.drift:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for label, prof in arts.drift.items():
            ax.plot(t, prof, lw=1, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\max_m |c_m(t) - c_m(0)|$")
        ax.set_title(f"{title}  coefficient drift")
        ax.legend(fontsize=8)
        paths.append(_save(fig, directory / "drift.png"))
    return paths


def plot_sweep(rows, param, directory, title=""):
    """Condition quantities and measured drift against the swept parameter."""
    x = np.array([r["value"] for r in rows], dtype=float)
    order = np.argsort(x)
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, style in (("g_max", "o-"), ("bound4", "s--"), ("bound5", "^--"),
                       ("traditional_max", "d:"), ("max_coeff_drift", "x-")):
        y = np.array([r[key] for r in rows], dtype=float)[order]
        y = np.where(np.isfinite(y) & (y > 0), y, np.nan)
        if np.any(np.isfinite(y)):
            ax.plot(x[order], y, style, label=key, ms=4)
    ax.set_yscale("log")
    ax.set_xlabel(param)
    ax.set_title(f"{title}  sweep over {param}")
    ax.legend(fontsize=8)
    return [_save(fig, Path(directory) / f"sweep_{param}.png")]
