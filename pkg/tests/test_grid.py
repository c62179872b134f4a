import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisopml.grid import (
    FieldState,
    FluxOperator,
    GridSpec,
    MaterialField,
    elastic_flux_divergence,
    history_gradient_term,
    mesh_size,
)
from anisopml.materials import Material, StiffnessTensor, isotropic_stiffness, olivine
from anisopml.pml import PmlProfile, build_coefficient_fields

ISO = Material(1000.0, isotropic_stiffness(2e9, 1e9))


def random_spd(rng, scale=1e10):
    a = rng.normal(size=(6, 6))
    return scale * (a @ a.T + 6 * np.eye(6)) / 6


def test_mesh_size_example():
    assert mesh_size(3000.0, 10, 1e5) == pytest.approx(3e-3, rel=1e-15)
    with pytest.raises(ValueError):
        mesh_size(0.0, 10, 1e5)


def test_grid_geometry():
    g = GridSpec.from_cells(0.5, 6, 3)
    assert g.n == 19
    assert g.shape == (19, 19, 19)
    assert g.physical_half_width == 3.0
    assert g.pml_thickness == 1.5
    x = g.axis_coords()
    assert x[0] == -4.5 and x[-1] == 4.5 and x[g.center_index] == 0
    assert g.physical_mask().sum() == 13**3
    assert g.enlarged(2).n == 23
    assert g.enlarged(2).pml_cells == 3


def test_grid_snaps_half_width():
    g = GridSpec(0.1, 1.04, 2)
    assert g.physical_cells == 10
    assert g.physical_half_width == pytest.approx(1.0)


@pytest.mark.parametrize("args", [(0.0, 1.0, 2), (0.1, 1.0, 0), (0.1, 0.01, 2)])
def test_grid_rejects_bad_geometry(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_nearest_index():
    g = GridSpec.from_cells(0.1, 5, 2)
    assert g.nearest_index((0.0, 0.0, 0.0)) == (7, 7, 7)
    assert g.nearest_index((0.21, -0.1, 0.04)) == (9, 6, 7)


def quadratic_state(grid, comp, fn):
    state = FieldState.zeros(grid)
    X = np.broadcast_arrays(*grid.coords())
    state.u[comp] = fn(*X)
    return state


def test_divergence_of_x1_squared():
    grid = GridSpec.from_cells(0.1, 4, 2)
    state = quadratic_state(grid, 0, lambda x, y, z: x * x)
    div = elastic_flux_divergence(state, ISO, None, grid)
    # (lambda + 2 mu) * 2 on every interior node, exactly
    inner = div[(slice(None),) + (slice(1, -1),) * 3]
    np.testing.assert_allclose(inner[0], 8e9, rtol=1e-12)
    np.testing.assert_allclose(inner[1:], 0.0, atol=1e-3)
    assert div[0, 0, 5, 5] == 0.0
    node = (3, 4, 5)
    np.testing.assert_allclose(elastic_flux_divergence(state, ISO, None, grid, node), [8e9, 0, 0], atol=1e-3)


def test_divergence_at_boundary_node_rejected():
    grid = GridSpec.from_cells(0.1, 4, 2)
    with pytest.raises(IndexError):
        elastic_flux_divergence(FieldState.zeros(grid), ISO, None, grid, (0, 3, 3))


def test_quadratics_exact_for_general_anisotropy():
    rng = np.random.default_rng(3)
    m = Material(2000.0, StiffnessTensor(random_spd(rng)))
    grid = GridSpec.from_cells(0.2, 3, 1)
    A = rng.normal(size=(3, 3, 3))
    A = 0.5 * (A + A.transpose(0, 2, 1))
    state = FieldState.zeros(grid)
    X = np.stack(np.broadcast_arrays(*grid.coords()))
    for i in range(3):
        state.u[i] = np.einsum("ab,a...,b...->...", A[i], X, X)
    C = m.stiffness.full()
    # div(C grad u)_i = sum_jkl C_ijkl d_j d_l u_k = 2 sum C_ijkl A[k, j, l]
    expected = 2 * np.einsum("ijkl,kjl->i", C, A)
    div = elastic_flux_divergence(state, m, None, grid)
    inner = div[(slice(None),) + (slice(1, -1),) * 3]
    np.testing.assert_allclose(inner, np.broadcast_to(expected[:, None, None, None], inner.shape),
                               rtol=1e-10, atol=1e-10 * np.abs(expected).max())


def assemble(op, grid):
    """Dense matrix of u -> div(C grad u) on the interior unknowns."""
    shape = (3,) + grid.shape
    mask = np.zeros(shape, bool)
    mask[(slice(None),) + (slice(1, -1),) * 3] = True
    idx = np.flatnonzero(mask)
    M = np.empty((idx.size, idx.size))
    w = np.zeros((3, 3) + grid.shape)
    for col, flat in enumerate(idx):
        u = np.zeros(shape)
        u.flat[flat] = 1.0
        M[:, col] = op.divergence(u, w).ravel()[idx]
    return M


def test_operator_symmetric_negative_semidefinite():
    grid = GridSpec.from_cells(1.0, 2, 1)  # n = 7
    M = assemble(FluxOperator(grid, MaterialField.uniform(olivine()), None), grid)
    scale = np.abs(M).max()
    np.testing.assert_allclose(M, M.T, atol=1e-12 * scale)
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    assert ev.max() <= 1e-10 * scale


def test_per_node_constant_medium_matches_uniform():
    grid = GridSpec.from_cells(0.1, 3, 1)
    m = olivine()
    C = np.broadcast_to(np.array(m.stiffness.voigt)[:, :, None, None, None], (6, 6) + grid.shape).copy()
    het = MaterialField(np.full(grid.shape, m.density), C)
    rng = np.random.default_rng(4)
    u = rng.normal(size=(3,) + grid.shape)
    w = np.zeros((3, 3) + grid.shape)
    a = FluxOperator(grid, het, None).divergence(u, w)
    b = FluxOperator(grid, MaterialField.uniform(m), None).divergence(u, w)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13 * np.abs(b).max())


def test_linearity():
    grid = GridSpec.from_cells(0.1, 3, 1)
    rng = np.random.default_rng(8)
    op = FluxOperator(grid, MaterialField.uniform(olivine()), None)
    a, b = rng.normal(size=(2, 3) + grid.shape)
    w = np.zeros((3, 3) + grid.shape)
    lhs = op.divergence(2.0 * a - 3.0 * b, w)
    rhs = 2.0 * op.divergence(a, w) - 3.0 * op.divergence(b, w)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


def smooth_error(h):
    L = 1.0
    cells = int(round(L / h))
    grid = GridSpec.from_cells(h, cells, 1)
    m = olivine()
    state = FieldState.zeros(grid)
    x, y, z = np.broadcast_arrays(*grid.coords())
    k = np.pi / 2
    state.u[0] = np.sin(k * x) * np.cos(k * y)
    state.u[1] = np.sin(k * y) * np.sin(k * z)
    state.u[2] = np.cos(k * z) * np.sin(k * x)
    div = elastic_flux_divergence(state, m, None, grid)
    # reference: the same operator is exact on quadratics, compare with spectral derivatives
    C = m.stiffness.full()
    g2 = np.zeros((3, 3, 3) + grid.shape)  # d_j d_l u_k
    s, c = np.sin, np.cos
    g2[0, 0, 0] = -k * k * s(k * x) * c(k * y)
    g2[0, 1, 1] = -k * k * s(k * x) * c(k * y)
    g2[0, 0, 1] = g2[0, 1, 0] = -k * k * c(k * x) * s(k * y)
    g2[1, 1, 1] = -k * k * s(k * y) * s(k * z)
    g2[1, 2, 2] = -k * k * s(k * y) * s(k * z)
    g2[1, 1, 2] = g2[1, 2, 1] = k * k * c(k * y) * c(k * z)
    g2[2, 2, 2] = -k * k * c(k * z) * s(k * x)
    g2[2, 0, 0] = -k * k * c(k * z) * s(k * x)
    g2[2, 0, 2] = g2[2, 2, 0] = -k * k * s(k * z) * c(k * x)
    exact = np.einsum("ijkl,kjl...->i...", C, g2)
    sl = (slice(None),) + grid.physical_slice()
    return np.abs(div[sl] - exact[sl]).max() / np.abs(exact[sl]).max()


def test_second_order_convergence():
    e1, e2 = smooth_error(0.1), smooth_error(0.05)
    assert e1 / e2 >= 3.5


def test_heterogeneous_rows_are_arithmetic_means():
    grid = GridSpec.from_cells(1.0, 1, 1)
    C = np.empty((6, 6) + grid.shape)
    vals = np.arange(grid.n, dtype=float) + 1
    base = np.array(olivine().stiffness.voigt)
    C[:] = base[:, :, None, None, None] * vals[None, None, :, None, None]
    mf = MaterialField(1.0, C)
    r = mf.rows("C", 0)
    assert r.shape == (3, 6, grid.n - 1, grid.n - 2, grid.n - 2)
    np.testing.assert_allclose(r[0, 0, :, 0, 0], base[0, 0] * (vals[:-1] + vals[1:]) / 2)


def test_uniform_material_field_drops_zero_viscosity():
    from anisopml.materials import ViscosityTensor

    mf = MaterialField.uniform(Material(1.0, isotropic_stiffness(1, 1), ViscosityTensor(np.zeros((6, 6)))))
    assert not mf.viscous


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_history_term_zero_without_damping_and_for_zero_fields(seed):
    grid = GridSpec.from_cells(0.1, 2, 2)
    prof = PmlProfile((1e3, 2e3, 3e3), 2, grid.pml_thickness, grid.physical_half_width)
    coeffs = build_coefficient_fields(grid, prof)
    r = history_gradient_term(FieldState.zeros(grid), ISO, coeffs, grid)
    assert not np.any(r)
    rng = np.random.default_rng(seed)
    state = FieldState.zeros(grid)
    state.u[:] = rng.normal(size=state.u.shape)
    state.U[:] = rng.normal(size=state.U.shape)
    r = history_gradient_term(state, ISO, coeffs, grid)
    # the forcing only lives where some beta is positive
    c = grid.center_index
    assert not np.any(r[:, :, c - 1:c + 2, c - 1:c + 2, c - 1:c + 2])


def test_history_term_face_region_value():
    # u1 = x1 in a face layer where only beta_1 is active: forcing for w_11 is -beta_1 C_1111
    grid = GridSpec.from_cells(0.1, 2, 2)
    prof = PmlProfile((1e3, 0.0, 0.0), 2, grid.pml_thickness, grid.physical_half_width)
    coeffs = build_coefficient_fields(grid, prof)
    state = quadratic_state(grid, 0, lambda x, y, z: x)
    c = grid.center_index
    node = (grid.n - 2, c, c)
    r = history_gradient_term(state, ISO, coeffs, grid, node)
    xh = grid.axis_coords()[grid.n - 2] + 0.5 * grid.spacing
    b1 = 1e3 * ((xh - grid.physical_half_width) / grid.pml_thickness) ** 2
    assert r[0, 0] == pytest.approx(-b1 * 4e9, rel=1e-12)
    assert r[1, 1] == pytest.approx(0.0, abs=1e-3)
