"""Energy-trace and mid-plane figures from run outputs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import read_energy_csv, read_snapshot

PLANES = (("x1-x2", 2), ("x1-x3", 1), ("x2-x3", 0))


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_energy(run_dir: str | Path, out: str | Path | None = None) -> Path:
    run_dir = Path(run_dir)
    trace = read_energy_csv(run_dir / "energy.csv")
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    total = trace.total
    peak = total.max() if total.size else 1.0
    ax.semilogy(trace.times * 1e6, np.maximum(total / peak, 1e-12), label="total")
    ax.semilogy(trace.times * 1e6, np.maximum(trace.kinetic / peak, 1e-12), "--", label="kinetic")
    ax.semilogy(trace.times * 1e6, np.maximum(trace.potential / peak, 1e-12), ":", label="potential")
    ax.set_xlabel("t (us)")
    ax.set_ylabel("E / E_peak (physical domain)")
    ax.legend()
    fig.tight_layout()
    out = Path(out) if out else run_dir / "energy.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def available_tags(run_dir: Path) -> list[int]:
    return sorted(int(p.stem.split("_")[1]) for p in run_dir.glob("u1_*.f64"))


def plot_midplanes(run_dir: str | Path, tag: int | None = None, out: str | Path | None = None) -> Path:
    """Displacement magnitude with in-plane arrows on the three principal planes."""
    run_dir = Path(run_dir)
    tags = available_tags(run_dir)
    if not tags:
        raise FileNotFoundError(f"no displacement snapshots in {run_dir}")
    tag = tags[-1] if tag is None else tag
    comps = []
    meta = {}
    for k in range(3):
        arr, meta = read_snapshot(run_dir / f"u{k + 1}_{tag:06d}.f64")
        comps.append(arr)
    u = np.stack(comps)
    mag = np.sqrt(np.sum(u * u, axis=0))
    mid = mag.shape[0] // 2
    vmax = mag.max() or 1.0
    plt = _mpl()
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.8))
    for ax, (name, normal) in zip(axes, PLANES):
        sl = [slice(None)] * 3
        sl[normal] = mid
        inplane = [a for a in range(3) if a != normal]
        img = mag[tuple(sl)] / vmax
        ax.imshow(img.T, origin="lower", cmap="viridis", vmin=0, vmax=1)
        step = max(1, img.shape[0] // 16)
        ua = u[inplane[0]][tuple(sl)][::step, ::step]
        ub = u[inplane[1]][tuple(sl)][::step, ::step]
        ii, jj = np.meshgrid(np.arange(0, img.shape[0], step), np.arange(0, img.shape[1], step), indexing="ij")
        ax.quiver(ii, jj, ua, ub, color="w", scale=None)
        ax.set_title(f"{name}, t = {meta['time'] * 1e6:.2f} us")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    out = Path(out) if out else run_dir / f"planes_{tag:06d}.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
