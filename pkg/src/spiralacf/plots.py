"""Self-contained SVG figures via the matplotlib SVG backend with a fixed hash salt."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "spiralacf"
matplotlib.rcParams["svg.fonttype"] = "path"


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def acf_plot(scan, floor: float, ceiling: float | None, path: Path) -> Path:
    """log-log Phi(r) and J(r) with the product floor line."""
    r = np.asarray(scan.radii)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(r, scan.phi, yerr=3 * np.asarray(scan.stderr), fmt="o", ms=3, label=r"$\Phi(r)$")
    ax.errorbar(r, scan.j, yerr=3 * np.asarray(scan.j_stderr), fmt="s", ms=3, label=r"$J(r)$")
    ax.axhline(floor, color="k", ls="--", lw=1, label=r"$\prod (1-\theta_k^2)^2$")
    if ceiling is not None:
        ax.axhline(ceiling, color="grey", ls=":", lw=1, label=r"$\prod (1+\theta_k^2)$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.legend(fontsize=8)
    ax.set_title(f"stage {scan.stage}, n = {scan.dimension}")
    return _save(fig, path)


def normal_plot(tscan, path: Path, annulus_angles: list | None = None) -> Path:
    """Angle of the best-fit normal against log r: the spiral signature."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(tscan.radii, np.unwrap(tscan.angles()), "-", lw=1.2, label=r"$\arg \nu(r)$")
    if tscan.blowups:
        ax.plot([b.radius for b in tscan.blowups], [np.angle(b.nu) for b in tscan.blowups], "o", ms=3,
                label="blow-up fit")
    for a in annulus_angles or []:
        ax.axhline(0.5 * np.pi + a, color="grey", ls=":", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel("angle")
    ax.legend(fontsize=8)
    return _save(fig, path)


def curve_plot(curve, path: Path, radius: float = 1.0) -> Path:
    v = curve.vertices
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(v.real, v.imag, "k-", lw=1)
    t = np.linspace(0, 2 * np.pi, 400)
    ax.plot(radius * np.cos(t), radius * np.sin(t), color="grey", lw=0.5)
    ax.set_aspect("equal")
    ax.set_xlim(-radius, radius)
    ax.set_ylim(-radius, radius)
    return _save(fig, path)
