"""Explicit time stepping of the second-order PML system.

Per node the system advanced is

    rho (dv/dt + a v + b u + c U) = div(C grad u [+ eta grad v] + w) + F
    dU/dt = u
    dw_ij/dt + beta_j w_ij = forcing_ij(grad u, grad U [, grad v])

with ``(u, v, U, w)`` stored at whole time levels. One step is a velocity
Verlet kick-drift-kick: the ``a v`` damping is split symmetrically
(Crank-Nicolson over each half kick), ``U`` uses the trapezoidal rule and the
stiff ``w`` relaxation is integrated exactly with trapezoidal forcing.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

from .grid import INTERIOR, FieldState, FluxOperator, GridSpec, MaterialField, divergence_interior, half_gradients, half_region
from .materials import voigt_to_full
from .pml import PmlCoefficientFields
from .sources import BodyForce, DirichletShell, SourceSpec

if TYPE_CHECKING:
    from .config import SimulationConfig
    from .diagnostics import EnergyTrace

log = logging.getLogger(__name__)

CHECK_EVERY = 16
DEFAULT_CFL_SAFETY = 0.5


class InstabilityError(RuntimeError):
    def __init__(self, step: int, node: tuple[int, ...], field_name: str):
        self.step = step
        self.node = node
        self.field_name = field_name
        super().__init__(f"non-finite {field_name} at node {node} detected at step {step}")


def cfl_time_step(h: float, c_max: float, cfl_safety: float = DEFAULT_CFL_SAFETY) -> float:
    return float(cfl_safety * h / (c_max * np.sqrt(3.0)))


def viscous_time_step(h: float, rho_min: float, eta_max: float) -> float:
    """Explicit bound ``h^2 rho / (6 eta_max)`` of the Kelvin-Voigt term."""
    return np.inf if eta_max <= 0 else float(h * h * rho_min / (6.0 * eta_max))


@dataclass
class TimeStepper:
    dt: float
    cfl_safety: float = DEFAULT_CFL_SAFETY
    t: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        if not 0 < self.cfl_safety < 1:
            raise ValueError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    @classmethod
    def for_medium(cls, h: float, c_max: float, cfl_safety: float = DEFAULT_CFL_SAFETY,
                   rho_min: float = 1.0, eta_max: float = 0.0) -> TimeStepper:
        dt = min(cfl_time_step(h, c_max, cfl_safety), viscous_time_step(h, rho_min, eta_max))
        return cls(dt, cfl_safety)

    def check(self, h: float, c_max: float):
        bound = cfl_time_step(h, c_max, self.cfl_safety)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt:g} s exceeds the CFL bound {bound:g} s")

    def advance(self):
        self.step_index += 1
        self.t = self.step_index * self.dt


class Solver:
    """Owns the field state and advances it one ``dt`` at a time.

    Parameters
    ----------
    grid, material : GridSpec, MaterialField
    coeffs : PmlCoefficientFields or None
        ``None`` (or all-zero damping) steps the plain elastic system.
    stepper : TimeStepper
    source : SourceSpec, optional
    state : FieldState, optional
        Initial condition; zero by default. Copied.
    """

    def __init__(self, grid: GridSpec, material: MaterialField, coeffs: PmlCoefficientFields | None,
                 stepper: TimeStepper, source: SourceSpec | None = None, state: FieldState | None = None):
        self.grid = grid
        self.material = material
        self.coeffs = coeffs
        self.stepper = stepper
        self.op = FluxOperator(grid, material, coeffs)
        self.damped = self.op.damped
        self.state = FieldState.zeros(grid) if state is None else state.copy()
        dt = stepper.dt

        self.shell = self.body = None
        if source is not None:
            if source.kind == "dirichlet_shell":
                self.shell = DirichletShell(source, grid)
            else:
                self.body = BodyForce(source, grid)

        self.rho = material.density
        if self.damped:
            self.b = coeffs.b
            self.c = coeffs.c
            quarter = 0.25 * dt * coeffs.a
            self.kick_keep = (1.0 - quarter) / (1.0 + quarter)
            self.kick_gain = 0.5 * dt / (1.0 + quarter)
            self.decay = []
            self.gain = []
            for j in range(3):
                beta = coeffs.relaxation_at(j)
                e = np.exp(-beta * dt)
                with np.errstate(divide="ignore", invalid="ignore"):
                    phi = np.where(beta > 0, -np.expm1(-beta * dt) / beta, dt)
                sl = half_region(j)
                self.decay.append(np.ascontiguousarray(np.broadcast_to(e, grid.shape)[sl]))
                self.gain.append(np.ascontiguousarray(0.5 * np.broadcast_to(phi, grid.shape)[sl]))
            self.history_active = self.op.history_active

        t = stepper.t
        if self.shell is not None:
            self.shell.impose_u(self.state.u, t)
            self.shell.impose_v(self.state.v, t)
        self.w_forcing = self.op.w_rhs(self.state.u, self.state.U, self.state.v) if self.damped else None
        div = self.op.divergence(self.state.u, self.state.w, self.state.v)
        self.accel = self._acceleration(div, self.state.u, self.state.U, t)

    def _acceleration(self, div: NDArray, u: NDArray, U: NDArray, t: float) -> NDArray:
        if self.body is not None:
            self.body.add(div, t)
        acc = div / self.rho
        if self.damped:
            acc -= self.b * u
            if self.history_active:
                acc -= self.c * U
        return acc

    def _sweep(self, u, U, v_stage, w_old):
        """Advance ``w`` with the new-level forcing and return (div, new forcing, new w)."""
        op = self.op
        h = self.grid.spacing
        div = np.zeros((3,) + self.grid.shape)
        interior = (slice(None),) + (INTERIOR,) * 3
        w_new = forcing = None
        if self.damped:
            w_new = np.zeros_like(w_old)
            forcing = np.zeros_like(w_old)
        for j in range(3):
            gu, gU, gv = op.gradients(u, U, v_stage, j)
            flux = op.stress(j, gu, gv)
            if self.damped:
                reg = (slice(None), j) + half_region(j)
                r = op.w_rhs_region(j, gu, gU, gv)
                wj = self.decay[j] * w_old[reg] + self.gain[j] * (self.w_forcing[reg] + r)
                w_new[reg] = wj
                forcing[reg] = r
                flux += wj
            div[interior] += divergence_interior(flux, j, h)
        return div, forcing, w_new

    def step(self) -> FieldState:
        s = self.state
        st = self.stepper
        dt = st.dt
        t_new = (st.step_index + 1) * dt

        if self.damped:
            v_half = self.kick_keep * s.v + self.kick_gain * self.accel
        else:
            v_half = s.v + (0.5 * dt) * self.accel
        u_new = s.u + dt * v_half
        if self.shell is not None:
            self.shell.impose_u(u_new, t_new)
            idx = (slice(None),) + self.shell.index
            v_half[idx] = (u_new[idx] - s.u[idx]) / dt
        U_new = s.U + (0.5 * dt) * (s.u + u_new)

        div, forcing, w_new = self._sweep(u_new, U_new, v_half, s.w)
        accel = self._acceleration(div, u_new, U_new, t_new)
        if self.damped:
            v_new = self.kick_keep * v_half + self.kick_gain * accel
        else:
            v_new = v_half + (0.5 * dt) * accel
        if self.shell is not None:
            self.shell.impose_v(v_new, t_new)

        self.state = FieldState(u_new, v_new, U_new, w_new if self.damped else s.w)
        self.accel = accel
        self.w_forcing = forcing
        st.advance()
        if st.step_index % CHECK_EVERY == 0:
            self.check_finite()
        return self.state

    def check_finite(self):
        for name in ("u", "v", "U", "w"):
            arr = getattr(self.state, name)
            bad = ~np.isfinite(arr)
            if bad.any():
                node = tuple(int(i) for i in np.argwhere(bad)[0][-3:])
                raise InstabilityError(self.stepper.step_index, node, name)

    def advance(self, steps: int, callback=None):
        for _ in range(steps):
            self.step()
            if callback is not None:
                callback(self)
        return self.state


class ElasticReferenceStepper:
    """Plain elastic stepper on the same grid, written against the full 3x3x3x3 tensor.

    No damping, history or auxiliary fields; used to check that the PML solver
    reduces to the undamped equation when every ``beta`` vanishes.
    """

    def __init__(self, grid: GridSpec, material: MaterialField, dt: float,
                 source: SourceSpec | None = None, u0: NDArray | None = None, v0: NDArray | None = None):
        if not material.is_uniform:
            raise ValueError("reference stepper supports uniform media only")
        self.grid = grid
        self.C = voigt_to_full(material.stiffness)
        self.rho = material.density
        self.dt = dt
        self.t = 0.0
        self.n = 0
        self.u = np.zeros((3,) + grid.shape) if u0 is None else u0.copy()
        self.v = np.zeros((3,) + grid.shape) if v0 is None else v0.copy()
        self.body = BodyForce(source, grid) if source is not None else None
        self.a = self._accel(self.u, 0.0)

    def _accel(self, u, t):
        h = self.grid.spacing
        f = np.zeros_like(u)
        for j in range(3):
            g = half_gradients(u, j, h)
            sigma_j = np.einsum("ikl,kl...->i...", self.C[:, j], g)
            f[(slice(None),) + (INTERIOR,) * 3] += divergence_interior(sigma_j, j, h)
        if self.body is not None:
            self.body.add(f, t)
        return f / self.rho

    def step(self):
        dt = self.dt
        self.n += 1
        self.t = self.n * dt
        v_half = self.v + 0.5 * dt * self.a
        self.u = self.u + dt * v_half
        self.a = self._accel(self.u, self.t)
        self.v = v_half + 0.5 * dt * self.a


@dataclass
class RunReport:
    steps: int
    t_end: float
    peak_energy: float
    final_energy: float
    wall_time: float
    stable: bool
    energy: EnergyTrace | None = field(default=None, repr=False)
    output_dir: Path | None = None
    message: str = ""

    @property
    def energy_ratio(self) -> float:
        return self.final_energy / self.peak_energy if self.peak_energy > 0 else 0.0


def build_solver(cfg: SimulationConfig, grid: GridSpec | None = None, state: FieldState | None = None) -> Solver:
    """Solver for a validated configuration, optionally on a different (larger) grid."""
    from .pml import PmlProfile, build_coefficient_fields

    grid = grid or cfg.grid
    mat = MaterialField.uniform(cfg.material_for_mode())
    profile = PmlProfile(cfg.beta0, cfg.pml_order, grid.pml_thickness, grid.physical_half_width)
    coeffs = build_coefficient_fields(grid, profile)
    stepper = TimeStepper(cfg.dt, cfg.cfl_safety)
    return Solver(grid, mat, coeffs, stepper, cfg.source, state)


def run(cfg: SimulationConfig, out_dir: str | Path | None = None, snapshot_every: int | None = None,
        energy_every: int | None = None, progress: bool = False) -> RunReport:
    """Run a scenario from ``t = 0`` to ``cfg.t_end`` writing traces and snapshots.

    On instability the outputs written so far are kept and the report carries
    ``stable=False``; the :class:`InstabilityError` is re-raised afterwards.
    """
    from .diagnostics import EnergyRecorder, write_energy_csv, write_snapshot

    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    snapshot_every = cfg.snapshot_every if snapshot_every is None else snapshot_every
    energy_every = cfg.energy_every if energy_every is None else energy_every
    start = time.perf_counter()
    solver = build_solver(cfg)
    mat = solver.material
    nsteps = cfg.n_steps
    recorder = EnergyRecorder(cfg.grid, mat)
    if nsteps > 0 and energy_every:
        recorder.record(solver.state, 0.0)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def snap(tag):
        for name in ("u", "v"):
            arr = getattr(solver.state, name)
            for k in range(3):
                write_snapshot(out, f"{name}{k + 1}", tag, arr[k], cfg.grid, solver.stepper.t)

    error = None
    try:
        for _ in range(nsteps):
            solver.step()
            n = solver.stepper.step_index
            if energy_every and (n % energy_every == 0 or n == nsteps):
                recorder.record(solver.state, solver.stepper.t)
            if out is not None and snapshot_every and n % snapshot_every == 0:
                snap(n)
            if progress and n % 100 == 0:
                log.info("step %d/%d  t=%.4g s", n, nsteps, solver.stepper.t)
        if nsteps:
            solver.check_finite()
    except InstabilityError as exc:
        error = exc
    trace = recorder.trace()
    if out is not None:
        write_energy_csv(out / "energy.csv", trace)
    peak = float(np.max(trace.total)) if len(trace.times) else 0.0
    final = float(trace.total[-1]) if len(trace.times) else 0.0
    report = RunReport(
        steps=solver.stepper.step_index,
        t_end=solver.stepper.t,
        peak_energy=peak,
        final_energy=final,
        wall_time=time.perf_counter() - start,
        stable=error is None,
        energy=trace,
        output_dir=out,
        message="" if error is None else str(error),
    )
    if error is not None:
        error.report = report
        raise error
    return report
