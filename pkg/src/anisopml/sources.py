"""Source waveform and the two excitation mechanisms.

The time signature is the unit-peak first derivative of a Gaussian,

    u0(t) = -sqrt(2e) pi f0 (t - t0) exp(-pi^2 f0^2 (t - t0)^2).

A ``dirichlet_shell`` source prescribes displacement on the staircase ball
``|x - center| <= radius``, polarised half-way between the outward normal and
the polar tangent. A ``body_force_point`` source adds a load to the momentum
equation at the nearest node or over a raised-cosine ball.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .grid import FieldState, GridSpec

SHELL_MIN_CELLS = 4
SQRT_2E = np.sqrt(2.0 * np.e)


def source_waveform(t, f0: float, t0: float):
    """Unit-peak derivative-of-Gaussian pulse; scalar or array ``t``."""
    tau = np.asarray(t, dtype=float) - t0
    arg = np.pi * f0 * tau
    out = -SQRT_2E * arg * np.exp(-arg * arg)
    return float(out) if out.ndim == 0 else out


def source_waveform_rate(t, f0: float, t0: float):
    """Time derivative of :func:`source_waveform`."""
    tau = np.asarray(t, dtype=float) - t0
    arg = np.pi * f0 * tau
    out = -SQRT_2E * np.pi * f0 * (1.0 - 2.0 * arg * arg) * np.exp(-arg * arg)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SourceSpec:
    kind: Literal["body_force_point", "dirichlet_shell"]
    f0: float
    t0: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.0
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("body_force_point", "dirichlet_shell"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not self.t0 >= 0:
            raise ValueError(f"t0 must be non-negative, got {self.t0}")
        if self.radius < 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))

    def waveform(self, t):
        return self.amplitude * source_waveform(t, self.f0, self.t0)

    def extent(self) -> float:
        """Largest |x_j| reached by the source support."""
        return float(np.max(np.abs(self.center))) + self.radius


def shell_directions(rel: NDArray) -> NDArray:
    """Unit polarisation ``(n + t_phi) / sqrt(2)`` for relative positions (..., 3).

    ``phi`` is the polar angle from the x3 axis and ``theta`` the azimuth;
    ``theta`` is taken as 0 on the x3 axis and both angles as 0 at the centre.
    """
    x, y, z = rel[..., 0], rel[..., 1], rel[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    phi = np.arccos(np.divide(z, r, out=np.ones_like(r), where=r > 0).clip(-1, 1))
    theta = np.arctan2(y, x)
    sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    n = np.stack([sp * ct, sp * st, cp], axis=-1)
    t_phi = np.stack([cp * ct, cp * st, -sp], axis=-1)
    return (n + t_phi) / np.sqrt(2.0)


def _check_inside(src: SourceSpec, grid: GridSpec, what: str):
    if src.extent() >= grid.physical_half_width:
        raise ValueError(
            f"{what} reaches |x| = {src.extent():g}, inside the PML "
            f"(physical half width {grid.physical_half_width:g})"
        )


class DirichletShell:
    """Precomputed node set and polarisation for a prescribed-displacement ball."""

    def __init__(self, src: SourceSpec, grid: GridSpec):
        if src.radius < SHELL_MIN_CELLS * grid.spacing * (1 - 1e-9):
            raise ValueError(
                f"shell radius {src.radius:g} m is resolved by fewer than {SHELL_MIN_CELLS} cells "
                f"(spacing {grid.spacing:g} m)"
            )
        _check_inside(src, grid, "shell source")
        self.src = src
        x1, x2, x3 = grid.coords()
        c = src.center
        rel = np.stack(np.broadcast_arrays(x1 - c[0], x2 - c[1], x3 - c[2]), axis=-1)
        mask = np.sum(rel * rel, axis=-1) <= src.radius**2 * (1 + 1e-12)
        self.index = np.nonzero(mask)
        self.polarisation = shell_directions(rel[self.index]).T  # (3, count)

    def displacement(self, t: float) -> NDArray:
        return self.polarisation * (self.src.amplitude * source_waveform(t, self.src.f0, self.src.t0))

    def velocity(self, t: float) -> NDArray:
        return self.polarisation * (self.src.amplitude * source_waveform_rate(t, self.src.f0, self.src.t0))

    def impose_u(self, u: NDArray, t: float):
        u[(slice(None),) + self.index] = self.displacement(t)

    def impose_v(self, v: NDArray, t: float):
        v[(slice(None),) + self.index] = self.velocity(t)


def apply_dirichlet_shell(state: FieldState, src: SourceSpec, t: float, grid: GridSpec,
                          shell: DirichletShell | None = None) -> DirichletShell:
    """Overwrite ``u`` and ``v`` on the shell nodes with the prescribed motion at ``t``."""
    shell = shell or DirichletShell(src, grid)
    shell.impose_u(state.u, t)
    shell.impose_v(state.v, t)
    return shell


class BodyForce:
    """Load distribution of a body-force source, normalised to unit total force."""

    def __init__(self, src: SourceSpec, grid: GridSpec):
        _check_inside(src, grid, "body force")
        self.src = src
        d = np.asarray(src.direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("body force direction must be non-zero")
        self.direction = d / norm
        if src.radius <= 0:
            idx = grid.nearest_index(src.center)
            self.index = tuple(np.array([i]) for i in idx)
            weights = np.array([1.0])
        else:
            x1, x2, x3 = grid.coords()
            c = src.center
            r = np.sqrt((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2)
            mask = r < src.radius
            self.index = np.nonzero(mask)
            weights = 0.5 * (1.0 + np.cos(np.pi * r[self.index] / src.radius))
            weights /= weights.sum()
        # force density in N/m^3 per unit source amplitude
        self.density = np.outer(self.direction, weights) / grid.cell_volume

    def add(self, rhs: NDArray, t: float, scale=1.0):
        """Add the force density at time ``t`` (times ``scale``) into ``rhs``."""
        amp = self.src.waveform(t)
        rhs[(slice(None),) + self.index] += (amp * self.density) * scale


def apply_body_force(rhs: NDArray, src: SourceSpec, t: float, grid: GridSpec,
                     force: BodyForce | None = None) -> BodyForce:
    """Add ``amplitude u0(t) direction / h^3`` (or its tapered spread) to ``rhs``."""
    force = force or BodyForce(src, grid)
    force.add(rhs, t)
    return force
