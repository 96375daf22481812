from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

AXES = ("fx", "fy", "fz")


def _savefig(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def plot_forces(trace: pd.DataFrame, site: str, path: str | Path) -> Path:
    """Estimated against true force per axis."""
    fig, axes = plt.subplots(len(AXES), 1, sharex=True, figsize=(7, 6))
    for ax, name in zip(axes, AXES):
        ax.plot(trace["t"], trace[f"f_true_{name}"], color="black", linewidth=1.0, label="true")
        ax.plot(trace["t"], trace[f"{site}_f_{name}"], color="tab:red", linewidth=0.8, label="estimated")
        ax.set_ylabel(f"{name} [N]")
        ax.grid(True, linewidth=0.3)
    axes[0].legend(loc="upper right", frameon=False)
    axes[-1].set_xlabel("t [s]")
    return _savefig(fig, Path(path))


def plot_trajectory(trace: pd.DataFrame, site: str, path: str | Path) -> Path:
    """Top view of the desired against the actual site path."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(trace[f"{site}_xdes_x"], trace[f"{site}_xdes_y"], color="black", linewidth=1.0, label="desired")
    ax.plot(trace[f"{site}_x_x"], trace[f"{site}_x_y"], color="tab:blue", linewidth=0.8, label="actual")
    if "in_contact" in trace:
        touching = trace[trace["in_contact"] > 0]
        ax.scatter(touching[f"{site}_x_x"], touching[f"{site}_x_y"], s=2, color="tab:blue", alpha=0.3)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="best", frameon=False)
    return _savefig(fig, Path(path))


def export_plots(trace: pd.DataFrame, site: str, out_dir: str | Path) -> List[Path]:
    out_dir = Path(out_dir)
    written = [plot_forces(trace, site, out_dir / "forces.svg")]
    if f"{site}_xdes_x" in trace:
        written.append(plot_trajectory(trace, site, out_dir / "trajectory.svg"))
    return written
