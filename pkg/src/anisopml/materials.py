"""Elastic and viscous material tensors.

Stiffness and viscosity are stored as symmetric 6x6 Voigt matrices with the
pair ordering 11, 22, 33, 23, 13, 12 and no factor-of-two scaling, so that
``C_ijkl == voigt[pair(i, j), pair(k, l)]``. Wave speeds come from the
Christoffel eigenproblem ``Gamma_ik = C_ijkl n_j n_l``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

# (i, j) -> Voigt row, zero-based
VOIGT_INDEX = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2]])
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

PD_RTOL = 1e-9
MBAR = 1e11  # Pa

# Olivine single crystal at 25 C, Mbar
OLIVINE_CONSTANTS_MBAR = {
    "c11": 2.58, "c22": 1.66, "c33": 2.07,
    "c44": 0.45, "c55": 0.56, "c66": 0.58,
    "c12": 0.87, "c13": 0.95, "c23": 0.92,
}
OLIVINE_DEFAULT_DENSITY = 3300.0


class MaterialError(ValueError):
    """Raised for tensors or materials that cannot support real wave speeds."""


def _check_symmetric_6x6(m: NDArray, name: str) -> NDArray:
    m = np.array(m, dtype=float)
    if m.shape != (6, 6):
        raise MaterialError(f"{name}: expected a 6x6 Voigt matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise MaterialError(f"{name}: non-finite entries")
    if not np.array_equal(m, m.T):
        asym = np.max(np.abs(m - m.T))
        scale = max(np.max(np.abs(m)), 1.0)
        if asym > 1e-12 * scale:
            raise MaterialError(f"{name}: Voigt matrix is not symmetric (max asymmetry {asym:g})")
        m = 0.5 * (m + m.T)
    return m


def is_positive_definite(m: NDArray, rtol: float = PD_RTOL) -> bool:
    """Smallest eigenvalue strictly above ``rtol`` times the largest."""
    ev = np.linalg.eigvalsh(m)
    return bool(ev[-1] > 0 and ev[0] > rtol * ev[-1])


class _VoigtMatrix:
    """Value equality and hashing on the read-only ``voigt`` array."""

    voigt: NDArray

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return bool(np.array_equal(self.voigt, other.voigt))

    def __hash__(self):
        return hash((type(self).__name__, self.voigt.tobytes()))


@dataclass(frozen=True, eq=False)
class StiffnessTensor(_VoigtMatrix):
    """Symmetric, positive-definite 6x6 stiffness matrix in Pa."""

    voigt: NDArray = field(repr=False)

    def __post_init__(self):
        m = _check_symmetric_6x6(self.voigt, "stiffness")
        if not is_positive_definite(m):
            ev = np.linalg.eigvalsh(m)
            raise MaterialError(
                f"stiffness is not positive definite (eigenvalues {ev[0]:.4g} .. {ev[-1]:.4g})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "voigt", m)

    @classmethod
    def from_upper_triangle(cls, entries: ArrayLike) -> StiffnessTensor:
        """Build from the 21 upper-triangle entries, row by row (c11, c12, ..., c66)."""
        return cls(_from_upper_triangle(entries))

    def upper_triangle(self) -> NDArray:
        return self.voigt[np.triu_indices(6)].copy()

    def full(self) -> NDArray:
        return voigt_to_full(self.voigt)


@dataclass(frozen=True, eq=False)
class ViscosityTensor(_VoigtMatrix):
    """Symmetric, positive semi-definite 6x6 viscosity matrix in Pa*s."""

    voigt: NDArray = field(repr=False)

    def __post_init__(self):
        m = _check_symmetric_6x6(self.voigt, "viscosity")
        ev = np.linalg.eigvalsh(m)
        if ev[0] < -PD_RTOL * max(abs(ev[-1]), np.finfo(float).tiny):
            raise MaterialError(f"viscosity is not positive semi-definite (min eigenvalue {ev[0]:.4g})")
        m.setflags(write=False)
        object.__setattr__(self, "voigt", m)

    @classmethod
    def from_upper_triangle(cls, entries: ArrayLike) -> ViscosityTensor:
        return cls(_from_upper_triangle(entries))

    def upper_triangle(self) -> NDArray:
        return self.voigt[np.triu_indices(6)].copy()

    @property
    def is_zero(self) -> bool:
        return not np.any(self.voigt)


@dataclass(frozen=True)
class Material:
    density: float
    stiffness: StiffnessTensor
    viscosity: ViscosityTensor | None = None

    def __post_init__(self):
        if not np.isfinite(self.density) or self.density <= 0:
            raise MaterialError(f"density must be positive, got {self.density}")


@dataclass(frozen=True)
class PlaneWaveProbe:
    """Propagation direction of a plane-wave probe ``A exp(i(k n.x - w t))``."""

    direction: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.direction, dtype=float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(f"probe direction must be a unit 3-vector, got {self.direction}")
        object.__setattr__(self, "direction", tuple(float(x) for x in n))

    @classmethod
    def along(cls, vector: ArrayLike) -> PlaneWaveProbe:
        n = np.asarray(vector, dtype=float)
        return cls(tuple(n / np.linalg.norm(n)))


def _from_upper_triangle(entries: ArrayLike) -> NDArray:
    entries = np.asarray(entries, dtype=float).ravel()
    if entries.size != 21:
        raise MaterialError(f"expected 21 upper-triangle Voigt entries, got {entries.size}")
    m = np.zeros((6, 6))
    m[np.triu_indices(6)] = entries
    return m + np.triu(m, 1).T


def isotropic_stiffness(lam: float, mu: float) -> StiffnessTensor:
    """Isotropic stiffness from the Lame constants.

    The zero tensor (``lam == mu == 0``) is returned unvalidated so it can be
    used as a degenerate placeholder; any other input must be a valid medium.
    """
    if not (np.isfinite(lam) and np.isfinite(mu)):
        raise MaterialError("Lame constants must be finite")
    m = np.zeros((6, 6))
    m[:3, :3] = lam
    m[[0, 1, 2], [0, 1, 2]] = lam + 2 * mu
    m[[3, 4, 5], [3, 4, 5]] = mu
    if lam == 0 and mu == 0:
        t = object.__new__(StiffnessTensor)
        m.setflags(write=False)
        object.__setattr__(t, "voigt", m)
        return t
    if mu < 0:
        raise MaterialError(f"shear modulus must be non-negative, got {mu}")
    return StiffnessTensor(m)


def orthorhombic_stiffness(c11, c22, c33, c44, c55, c66, c12, c13, c23) -> StiffnessTensor:
    m = np.diag([c11, c22, c33, c44, c55, c66]).astype(float)
    m[0, 1] = m[1, 0] = c12
    m[0, 2] = m[2, 0] = c13
    m[1, 2] = m[2, 1] = c23
    return StiffnessTensor(m)


def olivine(density: float = OLIVINE_DEFAULT_DENSITY) -> Material:
    """Olivine single crystal; the density is not a measured value, override as needed."""
    c = {k: v * MBAR for k, v in OLIVINE_CONSTANTS_MBAR.items()}
    return Material(density, orthorhombic_stiffness(**c))


def voigt_to_full(voigt: NDArray) -> NDArray:
    """Expand a 6x6 Voigt matrix into the 3x3x3x3 tensor."""
    idx = VOIGT_INDEX
    return np.asarray(voigt)[idx[:, :, None, None], idx[None, None, :, :]]


def full_to_voigt(full: NDArray) -> NDArray:
    full = np.asarray(full)
    out = np.empty((6, 6), dtype=full.dtype)
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for q, (k, l) in enumerate(VOIGT_PAIRS):
            out[p, q] = full[i, j, k, l]
    return out


def voigt_expand(t: StiffnessTensor | ViscosityTensor, i: int, j: int, k: int, l: int) -> float:
    """Return ``C_ijkl`` using one-based indices."""
    for name, v in zip("ijkl", (i, j, k, l)):
        if not (isinstance(v, (int, np.integer)) and 1 <= v <= 3):
            raise IndexError(f"index {name}={v!r} out of range 1..3")
    return float(t.voigt[VOIGT_INDEX[i - 1, j - 1], VOIGT_INDEX[k - 1, l - 1]])


def _direction_matrix(n: NDArray) -> NDArray:
    """Map unit directions (..., 3) to the (..., 6, 3) matrix with Gamma = N^T C N."""
    n1, n2, n3 = n[..., 0], n[..., 1], n[..., 2]
    z = np.zeros_like(n1)
    rows = [
        [n1, z, z],
        [z, n2, z],
        [z, z, n3],
        [z, n3, n2],
        [n3, z, n1],
        [n2, n1, z],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def christoffel_matrix(stiffness: StiffnessTensor, direction: ArrayLike) -> NDArray:
    """Christoffel matrix for one direction or a batch of shape (m, 3)."""
    n = np.asarray(direction, dtype=float)
    N = _direction_matrix(n)
    return np.swapaxes(N, -1, -2) @ stiffness.voigt @ N


def christoffel_speeds(m: Material, probe: PlaneWaveProbe | ArrayLike) -> NDArray:
    """Three phase speeds (m/s, ascending) along a unit direction.

    Parameters
    ----------
    m : Material
    probe : PlaneWaveProbe or array_like
        A probe, a unit 3-vector, or an ``(m, 3)`` batch of unit vectors.

    Returns
    -------
    ndarray
        Shape ``(3,)`` or ``(m, 3)``.
    """
    n = np.asarray(probe.direction if isinstance(probe, PlaneWaveProbe) else probe, dtype=float)
    gamma = christoffel_matrix(m.stiffness, n)
    ev = np.linalg.eigvalsh(gamma)
    lo, hi = ev[..., 0], ev[..., -1]
    bad = ~(lo > PD_RTOL * hi)
    if np.any(bad):
        where = n if n.ndim == 1 else n[np.argmax(bad)]
        raise MaterialError(f"Christoffel matrix not positive definite along direction {where}")
    return np.sqrt(ev / m.density)


# 6 face, 12 edge and 8 corner directions of a cube
_LATTICE_26 = np.array(
    [d for d in itertools.product((-1, 0, 1), repeat=3) if any(d)], dtype=float
)
_LATTICE_26 /= np.linalg.norm(_LATTICE_26, axis=1)[:, None]


def fibonacci_sphere(count: int) -> NDArray:
    """Quasi-uniform deterministic unit vectors."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sample_directions(samples: int) -> NDArray:
    """The 26 cube-lattice directions followed by ``samples - 26`` Fibonacci points.

    Every smaller sample set is a subset of every larger one.
    """
    if samples < 26:
        raise ValueError(f"at least 26 directions are needed to cover the sphere, got {samples}")
    return np.vstack([_LATTICE_26, fibonacci_sphere(samples - 26)])


def speed_bounds(m: Material, samples: int = 2000, chunk: int = 200_000) -> tuple[float, float]:
    """Minimum and maximum phase speed over a direction sample."""
    dirs = sample_directions(samples)
    lo, hi = np.inf, 0.0
    for start in range(0, len(dirs), chunk):
        s = christoffel_speeds(m, dirs[start:start + chunk])
        lo = min(lo, float(s[:, 0].min()))
        hi = max(hi, float(s[:, -1].max()))
    return lo, hi
