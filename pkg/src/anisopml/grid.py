"""Uniform cubic grid, field storage and the flux-form spatial operators.

Layout
------
Fields are ``(3, n, n, n)`` arrays indexed ``[component, x1, x2, x3]``. The
auxiliary field ``w`` is ``(3, 3, n, n, n)``; entry ``w[i, j]`` at index ``p``
along axis ``j`` lives at the half node ``p + 1/2`` of that axis (the last
index along ``j`` is unused), which is where the ``j``-flux it corrects is
formed. Outermost node layers carry homogeneous Dirichlet data.

Stresses on the ``j``-half nodes use the compact difference for ``d/dx_j``
and the ``j``-average of centred differences for the other derivatives; the
divergence then differences these half-node fluxes. Quadratic fields are
differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

from .materials import VOIGT_INDEX, Material

if TYPE_CHECKING:
    from .pml import PmlCoefficientFields


def mesh_size(c_min: float, N: float, f0: float) -> float:
    """Grid spacing ``c_min / (N f0)``."""
    if not (c_min > 0 and N > 0 and f0 > 0):
        raise ValueError("c_min, N and f0 must all be positive")
    return c_min / (N * f0)


@dataclass(frozen=True)
class GridSpec:
    spacing: float
    physical_half_width: float
    pml_cells: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if int(self.pml_cells) != self.pml_cells or self.pml_cells < 1:
            raise ValueError(f"pml_cells must be a positive integer, got {self.pml_cells}")
        if self.physical_cells < 1:
            raise ValueError("physical domain must span at least one cell")
        # snap the half width onto the grid
        object.__setattr__(self, "physical_half_width", self.physical_cells * self.spacing)

    @classmethod
    def from_cells(cls, spacing: float, physical_cells: int, pml_cells: int) -> GridSpec:
        return cls(spacing, physical_cells * spacing, pml_cells)

    @property
    def physical_cells(self) -> int:
        return int(round(self.physical_half_width / self.spacing))

    @property
    def half_cells(self) -> int:
        return self.physical_cells + self.pml_cells

    @property
    def n(self) -> int:
        return 2 * self.half_cells + 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    shape = dims

    @property
    def pml_thickness(self) -> float:
        return self.pml_cells * self.spacing

    @property
    def center_index(self) -> int:
        return self.half_cells

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def axis_coords(self) -> NDArray:
        return (np.arange(self.n) - self.half_cells) * self.spacing

    def coords(self) -> tuple[NDArray, NDArray, NDArray]:
        """Broadcastable coordinate arrays of shapes (n,1,1), (1,n,1), (1,1,n)."""
        x = self.axis_coords()
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def nearest_index(self, point) -> tuple[int, int, int]:
        idx = np.rint(np.asarray(point, dtype=float) / self.spacing).astype(int) + self.half_cells
        return tuple(int(i) for i in idx)

    def physical_slice(self) -> tuple[slice, slice, slice]:
        """Nodes of the closed physical cube ``|x_j| <= x0``."""
        s = slice(self.pml_cells, self.n - self.pml_cells)
        return (s, s, s)

    def physical_mask(self) -> NDArray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.physical_slice()] = True
        return m

    def enlarged(self, extra_cells: int) -> GridSpec:
        return GridSpec.from_cells(self.spacing, self.physical_cells + extra_cells, self.pml_cells)


@dataclass
class FieldState:
    """Displacement, velocity, displacement history and auxiliary stresses."""

    u: NDArray
    v: NDArray
    U: NDArray
    w: NDArray

    @classmethod
    def zeros(cls, grid: GridSpec) -> FieldState:
        s = grid.shape
        return cls(np.zeros((3,) + s), np.zeros((3,) + s), np.zeros((3,) + s), np.zeros((3, 3) + s))

    def copy(self) -> FieldState:
        return FieldState(self.u.copy(), self.v.copy(), self.U.copy(), self.w.copy())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (self.u, self.v, self.U, self.w))

    def max_abs(self) -> float:
        return float(max(np.abs(a).max() for a in (self.u, self.v, self.U, self.w)))


@dataclass
class MaterialField:
    """Density and Voigt stiffness/viscosity, either uniform or per node.

    Uniform tensors are (6, 6); per-node tensors are (6, 6, n, n, n). Density
    is a scalar or an (n, n, n) array.
    """

    density: float | NDArray
    stiffness: NDArray
    viscosity: NDArray | None = None
    _rows: dict = field(default_factory=dict, init=False, repr=False)

    @classmethod
    def uniform(cls, m: Material) -> MaterialField:
        eta = None
        if m.viscosity is not None and not m.viscosity.is_zero:
            eta = np.array(m.viscosity.voigt)
        return cls(float(m.density), np.array(m.stiffness.voigt), eta)

    @property
    def is_uniform(self) -> bool:
        return np.ndim(self.stiffness) == 2

    @property
    def viscous(self) -> bool:
        return self.viscosity is not None

    def density_at(self, sl=None) -> float | NDArray:
        if np.ndim(self.density) == 0:
            return self.density
        return self.density if sl is None else self.density[sl]

    def max_viscosity(self) -> float:
        if self.viscosity is None:
            return 0.0
        return float(np.max(np.abs(self.viscosity)))

    def rows(self, which: str, j: int) -> NDArray:
        """Voigt rows ``pair(i, j)``, ``i = 0..2``, at the ``j``-half nodes.

        Returns (3, 6) for uniform media or (3, 6, *region) averaged
        arithmetically between neighbouring nodes.
        """
        key = (which, j)
        if key not in self._rows:
            full = self.stiffness if which == "C" else self.viscosity
            sel = VOIGT_INDEX[:, j]
            r = full[sel]
            if r.ndim > 2:
                lo, hi = _half_pair(j)
                r = 0.5 * (r[(slice(None), slice(None)) + lo] + r[(slice(None), slice(None)) + hi])
            self._rows[key] = np.ascontiguousarray(r)
        return self._rows[key]


INTERIOR = slice(1, -1)


def _half_pair(j: int) -> tuple[tuple, tuple]:
    """Index tuples of the nodes either side of each ``j``-half node, other axes interior."""
    lo = [INTERIOR] * 3
    hi = [INTERIOR] * 3
    lo[j] = slice(0, -1)
    hi[j] = slice(1, None)
    return tuple(lo), tuple(hi)


def half_region(j: int) -> tuple[slice, slice, slice]:
    """Slice of a (n, n, n) array holding the ``j``-half-node values (staggered layout)."""
    s = [INTERIOR] * 3
    s[j] = slice(0, -1)
    return tuple(s)


def half_gradients(f: NDArray, j: int, h: float) -> NDArray:
    """``d f_k / d x_l`` at the ``j``-half nodes, shape (3, 3, *region)."""
    lo, hi = _half_pair(j)
    region_shape = f[(slice(None),) + lo].shape[1:]
    g = np.empty((3, 3) + region_shape)
    inv_h = 1.0 / h
    for k in range(3):
        fk = f[k]
        g[k, j] = (fk[hi] - fk[lo]) * inv_h
        for l in range(3):
            if l == j:
                continue
            m = 3 - j - l
            sp = [None] * 3
            sm = [None] * 3
            sp[l], sm[l] = slice(2, None), slice(0, -2)
            sp[j] = sm[j] = slice(None)
            sp[m] = sm[m] = INTERIOR
            central = fk[tuple(sp)] - fk[tuple(sm)]
            a = [slice(None)] * 3
            b = [slice(None)] * 3
            a[j], b[j] = slice(1, None), slice(0, -1)
            g[k, l] = (central[tuple(a)] + central[tuple(b)]) * (0.25 * inv_h)
    return g


def strain6(g: NDArray) -> NDArray:
    """Contract a (3, 3, ...) gradient to the six Voigt components (engineering shears)."""
    out = np.empty((6,) + g.shape[2:])
    out[0] = g[0, 0]
    out[1] = g[1, 1]
    out[2] = g[2, 2]
    np.add(g[1, 2], g[2, 1], out=out[3])
    np.add(g[0, 2], g[2, 0], out=out[4])
    np.add(g[0, 1], g[1, 0], out=out[5])
    return out


def contract_rows(rows: NDArray, eps: NDArray) -> NDArray:
    """``sum_q rows[i, q] eps[q]`` for uniform (3, 6) or per-node rows."""
    if rows.ndim == 2:
        return np.tensordot(rows, eps, axes=(1, 0))
    return np.einsum("iq...,q...->i...", rows, eps)


def divergence_interior(flux_j: NDArray, j: int, h: float) -> NDArray:
    """Difference half-node fluxes along ``j``; result on the interior nodes."""
    a = [slice(None)] * 4
    b = [slice(None)] * 4
    a[j + 1], b[j + 1] = slice(1, None), slice(0, -1)
    return (flux_j[tuple(a)] - flux_j[tuple(b)]) / h


class FluxOperator:
    """Shared machinery of the PML right-hand sides on one grid.

    ``w_rhs`` evaluates the auxiliary-field forcing (without the relaxation
    term) and ``divergence`` the divergence of the total half-node flux.
    Both return full-grid arrays that are zero outside their support.
    """

    def __init__(self, grid: GridSpec, material: MaterialField, coeffs: PmlCoefficientFields | None):
        self.grid = grid
        self.h = grid.spacing
        self.material = material
        self.damped = coeffs is not None and not coeffs.is_zero
        self.coeffs = coeffs
        self._factors = [None, None, None]
        self.history_active = False
        if self.damped:
            for j in range(3):
                ct, cb = coeffs.factors_at(j)
                ct = np.ascontiguousarray(ct[j][(slice(None),) + half_region(j)])
                cb = np.ascontiguousarray(cb[(slice(None),) + half_region(j)])
                self._factors[j] = (ct, cb)
                self.history_active |= bool(np.any(cb))

    def stress(self, j: int, gu: NDArray, gv: NDArray | None) -> NDArray:
        sig = contract_rows(self.material.rows("C", j), strain6(gu))
        if gv is not None:
            sig += contract_rows(self.material.rows("eta", j), strain6(gv))
        return sig

    def w_rhs_region(self, j: int, gu: NDArray, gU: NDArray | None, gv: NDArray | None) -> NDArray:
        """Auxiliary forcing for ``w[:, j]`` on the ``j``-half region, shape (3, *region)."""
        ct, cb = self._factors[j]
        # sum_kl C_ijkl (ct_jl du_k/dx_l + cb_l dU_k/dx_l) + eta_ijkl (ct_jl dv_k/dx_l + cb_l du_k/dx_l)
        scaled = gu * ct[None]
        if gU is not None and self.history_active:
            scaled += gU * cb[None]
        r = contract_rows(self.material.rows("C", j), strain6(scaled))
        if gv is not None:
            scaled_v = gv * ct[None]
            if self.history_active:
                scaled_v += gu * cb[None]
            r += contract_rows(self.material.rows("eta", j), strain6(scaled_v))
        return r

    def gradients(self, u, U, v, j):
        gu = half_gradients(u, j, self.h)
        gU = half_gradients(U, j, self.h) if (self.damped and self.history_active) else None
        gv = half_gradients(v, j, self.h) if (self.material.viscous and v is not None) else None
        return gu, gU, gv

    def w_rhs(self, u: NDArray, U: NDArray, v: NDArray | None = None) -> NDArray:
        out = np.zeros((3, 3) + self.grid.shape)
        if not self.damped:
            return out
        for j in range(3):
            gu, gU, gv = self.gradients(u, U, v, j)
            out[(slice(None), j) + half_region(j)] = self.w_rhs_region(j, gu, gU, gv)
        return out

    def divergence(self, u: NDArray, w: NDArray, v: NDArray | None = None) -> NDArray:
        out = np.zeros((3,) + self.grid.shape)
        interior = (slice(None),) + (INTERIOR,) * 3
        for j in range(3):
            gu = half_gradients(u, j, self.h)
            gv = half_gradients(v, j, self.h) if (self.material.viscous and v is not None) else None
            flux = self.stress(j, gu, gv)
            if self.damped:
                flux += w[(slice(None), j) + half_region(j)]
            out[interior] += divergence_interior(flux, j, self.h)
        return out


def _at_node(field_: NDArray, node) -> NDArray:
    i, j, k = node
    return field_[..., i, j, k].copy()


def elastic_flux_divergence(
    state: FieldState,
    material: MaterialField | Material,
    coeffs: PmlCoefficientFields | None,
    grid: GridSpec,
    node: tuple[int, int, int] | None = None,
) -> NDArray:
    """Divergence of ``C grad u (+ eta grad v) + w``; full field or one interior node.

    Boundary nodes are zero in the full-field result and rejected for ``node``.
    """
    if isinstance(material, Material):
        material = MaterialField.uniform(material)
    if node is not None and any(not (1 <= p <= grid.n - 2) for p in node):
        raise IndexError(f"node {node} has no one-cell halo")
    op = FluxOperator(grid, material, coeffs)
    div = op.divergence(state.u, state.w, state.v)
    return div if node is None else _at_node(div, node)


def history_gradient_term(
    state: FieldState,
    material: MaterialField | Material,
    coeffs: PmlCoefficientFields,
    grid: GridSpec,
    node: tuple[int, int, int] | None = None,
) -> NDArray:
    """Forcing of the auxiliary equations before the ``-beta_j w_ij`` relaxation.

    Returned in the staggered ``w`` layout, (3, 3, *grid), or as the 3x3
    matrix associated with ``node`` (entry ``[i, j]`` at ``node + e_j / 2``).
    """
    if isinstance(material, Material):
        material = MaterialField.uniform(material)
    op = FluxOperator(grid, material, coeffs)
    r = op.w_rhs(state.u, state.U, state.v)
    return r if node is None else _at_node(r, node)
