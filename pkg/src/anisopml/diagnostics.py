"""Energy in the physical domain, PML reflection measurement and file output."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

from .grid import FieldState, GridSpec, MaterialField, strain6
from .materials import Material

if TYPE_CHECKING:
    from .config import SimulationConfig


@dataclass
class EnergyTrace:
    times: NDArray
    kinetic: NDArray
    potential: NDArray

    @property
    def total(self) -> NDArray:
        return self.kinetic + self.potential

    def __len__(self):
        return len(self.times)


def _trapezoid_weights(n: int) -> NDArray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def physical_weights(grid: GridSpec) -> NDArray:
    """Quadrature weights (including ``h^3``) on the closed physical cube."""
    m = 2 * grid.physical_cells + 1
    w = _trapezoid_weights(m)
    return w[:, None, None] * w[None, :, None] * w[None, None, :] * grid.cell_volume


def _central_gradients(f: NDArray, grid: GridSpec) -> NDArray:
    """``d f_k / d x_l`` by centred differences on the physical nodes."""
    P = grid.pml_cells
    n = grid.n
    core = slice(P, n - P)
    g = np.empty((3, 3) + (n - 2 * P,) * 3)
    for l in range(3):
        plus = [core] * 3
        minus = [core] * 3
        plus[l] = slice(P + 1, n - P + 1)
        minus[l] = slice(P - 1, n - P - 1)
        for k in range(3):
            g[k, l] = (f[k][tuple(plus)] - f[k][tuple(minus)]) / (2 * grid.spacing)
    return g


def energy_densities(state: FieldState, material: MaterialField, grid: GridSpec) -> tuple[NDArray, NDArray]:
    sl = grid.physical_slice()
    v = state.v[(slice(None),) + sl]
    rho = material.density_at(sl)
    kin = 0.5 * rho * np.sum(v * v, axis=0)
    eps = strain6(_central_gradients(state.u, grid))
    C = material.stiffness
    if C.ndim == 2:
        sig = np.tensordot(C, eps, axes=(1, 0))
    else:
        sig = np.einsum("pq...,q...->p...", C[(slice(None), slice(None)) + sl], eps)
    pot = 0.5 * np.sum(sig * eps, axis=0)
    return kin, pot


def total_energy(state: FieldState, material: MaterialField | Material, grid: GridSpec,
                 weights: NDArray | None = None) -> tuple[float, float]:
    """Kinetic and strain energy (J) in the physical domain."""
    if isinstance(material, Material):
        material = MaterialField.uniform(material)
    w = physical_weights(grid) if weights is None else weights
    kin, pot = energy_densities(state, material, grid)
    return float(np.sum(w * kin)), float(np.sum(w * pot))


class EnergyRecorder:
    def __init__(self, grid: GridSpec, material: MaterialField):
        self.grid = grid
        self.material = material
        self.weights = physical_weights(grid)
        self._rows: list[tuple[float, float, float]] = []

    def record(self, state: FieldState, t: float):
        k, p = total_energy(state, self.material, self.grid, self.weights)
        self._rows.append((t, k, p))
        return k + p

    def trace(self) -> EnergyTrace:
        if not self._rows:
            e = np.empty(0)
            return EnergyTrace(e, e.copy(), e.copy())
        a = np.array(self._rows)
        return EnergyTrace(a[:, 0], a[:, 1], a[:, 2])


@dataclass(frozen=True)
class DecaySummary:
    peak: float
    final: float
    ratio: float
    time_to_1pct: float | None  # None: never reached

    def describe(self) -> str:
        t1 = "never" if self.time_to_1pct is None else f"{self.time_to_1pct:.6g}"
        return (f"peak={self.peak:.6g} final={self.final:.6g} "
                f"ratio={self.ratio:.6g} time_to_1pct={t1}")


def energy_decay_summary(trace: EnergyTrace) -> DecaySummary:
    if len(trace) == 0:
        raise ValueError("energy trace is empty")
    total = trace.total
    ip = int(np.argmax(total))
    peak = float(total[ip])
    final = float(total[-1])
    ratio = final / peak if peak > 0 else 0.0
    below = np.nonzero(total[ip:] <= 0.01 * peak)[0]
    t1 = float(trace.times[ip + below[0]]) if (below.size and peak > 0) else None
    return DecaySummary(peak, final, ratio, t1)


def write_energy_csv(path: str | Path, trace: EnergyTrace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "kinetic", "potential", "total"])
        for row in zip(trace.times, trace.kinetic, trace.potential, trace.total):
            wr.writerow([repr(float(x)) for x in row])


def read_energy_csv(path: str | Path) -> EnergyTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        e = np.empty(0)
        return EnergyTrace(e, e.copy(), e.copy())
    return EnergyTrace(data[:, 0], data[:, 1], data[:, 2])


def write_snapshot(out_dir: str | Path, component: str, tag: int, arr: NDArray, grid: GridSpec, t: float) -> Path:
    """Raw little-endian float64, x1 fastest, plus a ``.txt`` sidecar."""
    out_dir = Path(out_dir)
    stem = out_dir / f"{component}_{tag:06d}"
    path = stem.with_suffix(".f64")
    np.asarray(arr, dtype="<f8").ravel(order="F").tofile(path)
    n1, n2, n3 = arr.shape
    stem.with_suffix(".txt").write_text(
        f"dims = {n1} {n2} {n3}\n"
        f"spacing = {float(grid.spacing)!r}\n"
        f"time = {float(t)!r}\n"
        f"component = {component}\n"
    )
    return path


def read_snapshot(path: str | Path) -> tuple[NDArray, dict]:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".txt").read_text().splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    dims = tuple(int(x) for x in meta["dims"].split())
    arr = np.fromfile(path, dtype="<f8").reshape(dims, order="F")
    meta["spacing"] = float(meta["spacing"])
    meta["time"] = float(meta["time"])
    return arr, meta


@dataclass(frozen=True)
class ReflectionReport:
    max_relative_error: float
    probe_half_cells: int
    reference_margin_cells: int
    max_abs_error: float = 0.0
    max_reference: float = 0.0
    steps: int = 0

    def write(self, path: str | Path):
        Path(path).write_text(
            "".join(f"{k} = {v}\n" for k, v in self.__dict__.items())
        )


class CausalityError(ValueError):
    pass


def required_margin_cells(cfg: SimulationConfig, probe_fraction: float = 0.5) -> int:
    """Smallest margin for which the enlarged boundary stays out of the probe region.

    A wave leaving the source support must reach the reference PML and come
    back to the probe box; that round trip has to exceed ``c_max t_end``.
    """
    grid = cfg.grid
    probe = np.floor(probe_fraction * grid.physical_cells) * grid.spacing
    src = cfg.source.extent()
    need = cfg.c_max * cfg.t_end
    # (L - src) + (L - probe) > need, L = x0 + margin * h; two cells of slack for stencil spread
    L = 0.5 * (need + src + probe)
    return max(0, int(np.ceil((L - grid.physical_half_width) / grid.spacing)) + 2)


def _probe_slice(grid: GridSpec, probe_cells: int):
    c = grid.center_index
    s = slice(c - probe_cells, c + probe_cells + 1)
    return (slice(None), s, s, s)


def record_probe(solver, steps: int, probe_cells: int) -> NDArray:
    """Step ``solver`` and keep ``u`` on the centred probe box after every step."""
    sl = _probe_slice(solver.grid, probe_cells)
    out = np.empty((steps, 3) + (2 * probe_cells + 1,) * 3)
    for n in range(steps):
        solver.step()
        out[n] = solver.state.u[sl]
    return out


def compare_to_history(test, history: NDArray, probe_cells: int) -> tuple[float, float]:
    """Step ``test`` against a recorded probe history.

    Returns (max |u_test - u_ref|, max |u_ref|), vector norms, over every
    step and probe node.
    """
    pt = _probe_slice(test.grid, probe_cells)
    err = 0.0
    peak = 0.0
    for ur in history:
        test.step()
        d = test.state.u[pt] - ur
        err = max(err, float(np.sqrt(np.max(np.sum(d * d, axis=0)))))
        peak = max(peak, float(np.sqrt(np.max(np.sum(ur * ur, axis=0)))))
    return err, peak


def reference_history(cfg: SimulationConfig, margin_cells: int, probe_fraction: float = 0.5,
                      strict: bool = True) -> NDArray:
    """Probe history of the run on the grid enlarged by ``margin_cells``.

    It does not depend on the PML width of ``cfg``, so one history can serve
    several PML settings over the same physical domain.
    """
    from .solver import build_solver

    if margin_cells < 0:
        raise ValueError("margin_cells must be non-negative")
    need = required_margin_cells(cfg, probe_fraction)
    if strict and margin_cells < need:
        raise CausalityError(
            f"margin of {margin_cells} cells lets boundary reflections reach the probe region "
            f"before t_end; at least {need} cells are required"
        )
    probe_cells = int(np.floor(probe_fraction * cfg.grid.physical_cells))
    ref = build_solver(cfg, grid=cfg.grid.enlarged(margin_cells))
    return record_probe(ref, cfg.n_steps, probe_cells)


def measure_reflection(cfg: SimulationConfig, margin_cells: int, probe_fraction: float = 0.5,
                       strict: bool = True, reference: NDArray | None = None) -> ReflectionReport:
    """Compare the configured run with one on a grid enlarged by ``margin_cells``.

    ``strict`` rejects margins whose enlarged boundary could be seen by the
    probe region before ``t_end``; the margin-0 self comparison needs
    ``strict=False``. A precomputed ``reference`` from
    :func:`reference_history` skips the enlarged run.
    """
    from .solver import build_solver

    probe_cells = int(np.floor(probe_fraction * cfg.grid.physical_cells))
    if reference is None:
        reference = reference_history(cfg, margin_cells, probe_fraction, strict)
    elif reference.shape != (cfg.n_steps, 3) + (2 * probe_cells + 1,) * 3:
        raise ValueError(f"reference history of shape {reference.shape} does not match this configuration")
    steps = cfg.n_steps
    if steps == 0:
        return ReflectionReport(0.0, probe_cells, margin_cells)
    err, peak = compare_to_history(build_solver(cfg), reference, probe_cells)
    rel = err / peak if peak > 0 else 0.0
    return ReflectionReport(rel, probe_cells, margin_cells, err, peak, steps)
