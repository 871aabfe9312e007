"""Figures rendered from a run directory.  Headless (Agg) and free of timestamps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .domain import BaseGrid, read_surface_csv  # noqa: E402
from .io import read_diagnostics, read_state_csv  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 120,
}
PNG_META = {"Software": None}


def _steps(directory: Path, prefix: str) -> list[int]:
    out = []
    for p in directory.glob(f"{prefix}_*.csv"):
        tail = p.stem[len(prefix) + 1 :]
        if tail.isdigit():
            out.append(int(tail))
    return sorted(out)


def plot_diagnostics(diag: dict, path) -> None:
    t, H, E = diag["t"], diag["H"], diag["E_bb"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10, 3))
        drift = np.abs(H - H[0]) / max(abs(H[0]), 1e-300)
        axes[0].semilogy(t, np.maximum(drift, 1e-17), color="k")
        axes[0].set_xlabel("t")
        axes[0].set_ylabel("relative drift of H")
        axes[1].plot(t, E, color="tab:blue")
        axes[1].set_xlabel("t")
        axes[1].set_ylabel("E_bb")
        axes[2].semilogy(t, np.maximum(diag["mass_residual"], 1e-17), label="mass")
        axes[2].semilogy(t, np.maximum(diag["surface_residual"], 1e-17), label="surface")
        axes[2].set_xlabel("t")
        axes[2].set_ylabel("residual")
        axes[2].legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def plot_trajectories(states: list[dict], path) -> None:
    Y = np.stack([np.column_stack([s["y1"], s["y2"]]) for s in states])  # (steps, n, 2)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for i in range(Y.shape[1]):
            ax.plot(Y[:, i, 0], Y[:, i, 1], lw=0.8)
            ax.plot(Y[-1, i, 0], Y[-1, i, 1], "k.", ms=3)
        ax.set_xlabel("y1")
        ax.set_ylabel("y2")
        ax.set_aspect("equal", adjustable="datalim")
        fig.tight_layout()
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def plot_surface(profile, path) -> None:
    g = profile.grid
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.8))
        im = ax.pcolormesh(g.node_x(), g.node_y(), profile.heights.T, shading="gouraud", cmap="viridis")
        fig.colorbar(im, ax=ax, label="h")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal")
        fig.tight_layout()
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def render_report(directory, grid: BaseGrid) -> list[Path]:
    """Write the figures for every artefact present in ``directory``; returns their paths."""
    directory = Path(directory)
    written = []
    diag_path = directory / "diagnostics.csv"
    if diag_path.exists():
        diag = read_diagnostics(diag_path)
        if len(diag["t"]):
            written.append(directory / "diagnostics.png")
            plot_diagnostics(diag, written[-1])
    steps = _steps(directory, "state")
    if steps:
        states = [read_state_csv(directory / f"state_{k}.csv") for k in steps]
        written.append(directory / "trajectories.png")
        plot_trajectories(states, written[-1])
    surf = _steps(directory, "surface")
    if surf:
        prof = read_surface_csv(directory / f"surface_{surf[-1]}.csv", grid)
        written.append(directory / "surface.png")
        plot_surface(prof, written[-1])
    return written
