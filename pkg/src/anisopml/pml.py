"""Damping profiles and the derived coefficient fields of the PML system.

With per-axis damping ``beta_j(x_j)`` the layer adds, at every node,

    a = b1 + b2 + b3,   b = b1 b2 + b2 b3 + b3 b1,   c = b1 b2 b3

to the displacement equation, and feeds the auxiliary fields ``w_ij`` through
``(a - b_j - b_l) C_ijkl`` (applied to grad u) and ``(c / b_l) C_ijkl``
(applied to grad of the displacement history). The second factor is stored as
the product of the two other betas, which is finite everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .grid import GridSpec

DEFAULT_ORDER = 2
DEFAULT_REFLECTION = 1e-3
DEFAULT_CELLS = 4


@dataclass(frozen=True)
class PmlProfile:
    """Polynomial damping design for the layer around the cube ``|x_j| < half_width``."""

    beta0: tuple[float, float, float]
    order: int
    thickness: float
    half_width: float
    alpha: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        beta0 = tuple(float(b) for b in np.broadcast_to(np.asarray(self.beta0, dtype=float), (3,)))
        object.__setattr__(self, "beta0", beta0)
        if any(not np.isfinite(b) or b < 0 for b in beta0):
            raise ValueError(f"beta0 must be finite and non-negative, got {beta0}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"polynomial order must be a positive integer, got {self.order}")
        if not self.thickness > 0:
            raise ValueError(f"PML thickness must be positive, got {self.thickness}")
        if not self.half_width > 0:
            raise ValueError(f"physical half width must be positive, got {self.half_width}")
        if tuple(self.alpha) != (1.0, 1.0, 1.0):
            raise ValueError("coordinate scaling alpha != 1 is not supported")

    @classmethod
    def designed(
        cls,
        grid: GridSpec,
        c_max: float,
        reflection: float | ArrayLike = DEFAULT_REFLECTION,
        order: int = DEFAULT_ORDER,
    ) -> PmlProfile:
        """Profile filling the grid's PML collar with ``beta0`` set from a target reflection."""
        d = grid.pml_thickness
        r = np.broadcast_to(np.asarray(reflection, dtype=float), (3,))
        beta0 = tuple(beta0_from_reflection(float(rj), order, d, c_max) for rj in r)
        return cls(beta0, order, d, grid.physical_half_width)


def beta_profile(axis: int, x: ArrayLike, p: PmlProfile) -> NDArray | float:
    """Damping ``beta_axis(x)`` in 1/s; ``axis`` is one-based.

    Zero inside the physical domain, ``beta0 ((|x| - x0) / d)**n`` in the layer.
    """
    if axis not in (1, 2, 3):
        raise IndexError(f"axis must be 1, 2 or 3, got {axis}")
    ax = np.abs(np.asarray(x, dtype=float))
    outer = p.half_width + p.thickness
    if np.any(ax > outer * (1 + 1e-12)):
        raise ValueError(f"coordinate outside the computational domain |x| <= {outer:g}")
    depth = np.clip((ax - p.half_width) / p.thickness, 0.0, None)
    out = np.where(ax < p.half_width, 0.0, p.beta0[axis - 1] * depth**p.order)
    return float(out) if out.ndim == 0 else out


def beta0_from_reflection(R: float, n: int, d: float, c_max: float) -> float:
    """Peak damping giving amplitude reflection ``R`` at normal incidence."""
    if not (0 < R <= 1):
        raise ValueError(f"reflection target must lie in (0, 1], got {R}")
    if not (d > 0 and c_max > 0 and n >= 1):
        raise ValueError("thickness, c_max and order must be positive")
    return c_max * (n + 1) * np.log(1.0 / R) / (2.0 * d)


def _axis_shape(axis: int) -> tuple[int, int, int]:
    s = [1, 1, 1]
    s[axis] = -1
    return tuple(s)


@dataclass(frozen=True)
class PmlCoefficientFields:
    """Node and half-node samples of the damping, with derived fields on demand.

    ``beta_nodes[m]`` samples axis ``m`` (zero-based) at grid nodes and
    ``beta_half[m]`` at the half nodes ``x_{p + 1/2}``, ``p = 0 .. n-2``.
    Node-centred fields broadcast to the full grid shape.
    """

    grid: GridSpec
    profile: PmlProfile
    beta_nodes: tuple[NDArray, NDArray, NDArray]
    beta_half: tuple[NDArray, NDArray, NDArray]

    @property
    def is_zero(self) -> bool:
        return not any(np.any(b) for b in self.beta_nodes + self.beta_half)

    def _betas(self, half_axis: int | None = None) -> list[NDArray]:
        out = []
        for m in range(3):
            prof = self.beta_nodes[m]
            if m == half_axis:
                # pad so the array keeps the node count; the last entry is unused
                prof = np.append(self.beta_half[m], 0.0)
            out.append(prof.reshape(_axis_shape(m)))
        return out

    def _full(self, arr: NDArray) -> NDArray:
        return np.ascontiguousarray(np.broadcast_to(arr, self.grid.shape))

    @cached_property
    def beta(self) -> tuple[NDArray, NDArray, NDArray]:
        return tuple(self._full(b) for b in self._betas())

    @cached_property
    def a(self) -> NDArray:
        b1, b2, b3 = self._betas()
        return self._full(b1 + b2 + b3)

    @cached_property
    def b(self) -> NDArray:
        b1, b2, b3 = self._betas()
        return self._full(b1 * b2 + b2 * b3 + b3 * b1)

    @cached_property
    def c(self) -> NDArray:
        b1, b2, b3 = self._betas()
        return self._full(b1 * b2 * b3)

    @cached_property
    def ctilde_factor(self) -> NDArray:
        """``a - beta_j - beta_l`` at nodes, shape (3, 3, *grid)."""
        return self.factors_at(None)[0]

    @cached_property
    def cbreve_factor(self) -> NDArray:
        """``prod_{m != l} beta_m`` at nodes, shape (3, *grid)."""
        return self.factors_at(None)[1]

    def factors_at(self, half_axis: int | None) -> tuple[NDArray, NDArray]:
        """Factor fields with axis ``half_axis`` sampled at half nodes.

        Returns ``(ctilde, cbreve)`` of shapes (3, 3, *grid) and (3, *grid).
        """
        bs = self._betas(half_axis)
        a = bs[0] + bs[1] + bs[2]
        ctilde = np.empty((3, 3) + self.grid.shape)
        for j in range(3):
            for l in range(3):
                ctilde[j, l] = np.broadcast_to(a - bs[j] - bs[l], self.grid.shape)
        cbreve = np.empty((3,) + self.grid.shape)
        for l in range(3):
            o1, o2 = [m for m in range(3) if m != l]
            cbreve[l] = np.broadcast_to(bs[o1] * bs[o2], self.grid.shape)
        return ctilde, cbreve

    def relaxation_at(self, j: int) -> NDArray:
        """``beta_j`` at the half nodes of axis ``j``, broadcastable to the grid."""
        return np.append(self.beta_half[j], 0.0).reshape(_axis_shape(j))

    def physical_mask(self) -> NDArray:
        """True at nodes inside the closed physical cube."""
        return self.grid.physical_mask()


def build_coefficient_fields(grid: GridSpec, p: PmlProfile) -> PmlCoefficientFields:
    """Sample the damping profile on the grid and package the derived fields."""
    if not np.isclose(p.half_width, grid.physical_half_width, rtol=1e-9, atol=0):
        raise ValueError(
            f"PML half width {p.half_width:g} does not match the grid's physical half width "
            f"{grid.physical_half_width:g}"
        )
    if not np.isclose(p.thickness, grid.pml_thickness, rtol=1e-9, atol=0):
        raise ValueError(
            f"PML thickness {p.thickness:g} does not match the grid collar {grid.pml_thickness:g}"
        )
    x = grid.axis_coords()
    xh = 0.5 * (x[1:] + x[:-1])
    nodes = tuple(np.asarray(beta_profile(m + 1, x, p)) for m in range(3))
    half = tuple(np.asarray(beta_profile(m + 1, xh, p)) for m in range(3))
    return PmlCoefficientFields(grid, p, nodes, half)


def zero_coefficient_fields(grid: GridSpec) -> PmlCoefficientFields:
    """No damping anywhere; the PML system reduces to the plain elastic equation."""
    p = PmlProfile((0.0, 0.0, 0.0), DEFAULT_ORDER, grid.pml_thickness, grid.physical_half_width)
    return build_coefficient_fields(grid, p)
