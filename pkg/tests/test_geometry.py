import numpy as np
import pytest

from viscolimit.errors import DegenerateMap
from viscolimit.geometry import (FlowMapState, compute_geometry, det_by_row, div_eta_field, jacobi_residual,
                                 piola_residual, wall_structure_residual)
from viscolimit.grid import make_grid
from viscolimit.identities import map_errors, observed_rates, random_map, slab_for


def _state(grid, disp, vel=None):
    return FlowMapState(grid.coords + disp, np.zeros((3,) + grid.shape) if vel is None else vel)


def test_identity_map():
    g = make_grid("slab3d", 4, 4, 9)
    c = compute_geometry(FlowMapState.rest(g), g)
    eye = np.eye(3)[:, :, None, None, None]
    for M in (c.grad_eta, c.A, c.a):
        assert np.array_equal(M, np.broadcast_to(eye, M.shape))
    assert np.all(c.J == 1.0)
    assert piola_residual(c, g) == 0.0


def test_shear_map_cofactor():
    g = make_grid("column1d", 1, 1, 17)
    disp = np.zeros((3,) + g.shape)
    disp[0] = 0.3 * g.coords[2]
    c = compute_geometry(_state(g, disp), g)
    expected = np.array([[1, 0, 0], [0, 1, 0], [-0.3, 0, 1]], dtype=float)
    assert np.allclose(c.a[..., 0, 0, 5], expected, atol=1e-14)
    assert np.allclose(c.J, 1.0, atol=1e-14)
    # independent inverse oracle
    G = c.grad_eta[..., 0, 0, 5]
    assert np.allclose(c.a[..., 0, 0, 5], np.linalg.det(G) * np.linalg.inv(G).T, atol=1e-14)


def test_constant_gradient_has_zero_piola_residual():
    g = make_grid("column1d", 1, 1, 33)
    disp = np.zeros((3,) + g.shape)
    disp[:, 0, 0, :] = np.outer([0.2, -0.1, 0.4], g.z)
    c = compute_geometry(_state(g, disp), g)
    assert piola_residual(c, g) < 1e-13


def test_random_map_matches_lu_and_row_expansions():
    g = slab_for(33)
    e = map_errors(random_map(np.random.default_rng(11)), g)
    assert e["cofactor_vs_lu"] < 1e-12
    assert e["det_rows"] < 1e-12
    assert e["a_exact_vs_lu"] < 1e-12


def test_small_perturbation_against_lu():
    g = make_grid("slab3d", 8, 8, 17)
    x, y, z = g.coords
    disp = 0.01 * np.stack([np.sin(2 * np.pi * x) * np.exp(-z), np.cos(2 * np.pi * y) * z**2, np.sin(2 * np.pi * (x + y)) * z])
    c = compute_geometry(_state(g, disp), g)
    mats = np.moveaxis(c.grad_eta.reshape(3, 3, -1), -1, 0)
    lu = np.linalg.det(mats)[:, None, None] * np.transpose(np.linalg.inv(mats), (0, 2, 1))
    assert np.max(np.abs(np.moveaxis(lu, 0, -1).reshape(c.a.shape) - c.a)) < 1e-12
    assert np.allclose(np.einsum("ij...,kj...->ik...", c.A, c.grad_eta), np.eye(3)[:, :, None, None, None], atol=1e-13)
    for r in (1, 2):
        assert np.max(np.abs(det_by_row(c.grad_eta, c.a, r) - c.J)) < 1e-14


def test_piola_residual_second_order():
    smap = random_map(np.random.default_rng(5))
    res = [map_errors(smap, slab_for(n), algebraic=False)["piola"] for n in (33, 65, 129)]
    rates = observed_rates(res)
    assert all(1.7 <= r <= 2.3 for r in rates), rates


def test_column_ansatz_normal_column():
    g = make_grid("column1d", 1, 1, 33)
    z = g.z
    disp = np.zeros((3,) + g.shape)
    disp[0, 0, 0] = 0.05 * np.sin(3 * z)
    disp[1, 0, 0] = 0.02 * z**2
    disp[2, 0, 0] = 0.1 * np.sin(np.pi * z) ** 2
    c = compute_geometry(_state(g, disp), g)
    assert np.all(c.a[0, 2] == 0.0) and np.all(c.a[1, 2] == 0.0) and np.all(c.a[2, 2] == 1.0)
    assert wall_structure_residual(c) == 0.0


def test_degenerate_map_raises():
    g = make_grid("column1d", 1, 1, 17)
    disp = np.zeros((3,) + g.shape)
    disp[2] = -g.coords[2]  # collapses the column: J = 0
    with pytest.raises(DegenerateMap):
        compute_geometry(_state(g, disp), g)


def test_jacobi_residual_static_and_dilation():
    g = make_grid("column1d", 1, 1, 33)
    s = FlowMapState.rest(g)
    later = s.copy()
    later.t = 0.1
    assert jacobi_residual(s, later, g) == 0.0

    # uniform dilation eta_3 = z exp(sigma t), v_3 = sigma eta_3: J(t) = exp(sigma t)
    sigma = 0.1

    def at(t):
        st = FlowMapState.rest(g)
        st.eta[2] = g.coords[2] * np.exp(sigma * t)
        st.vel[2] = sigma * st.eta[2]
        st.t = t
        return st

    res = [jacobi_residual(at(0.2 - dt / 2), at(0.2 + dt / 2), g) for dt in (0.1, 0.05)]
    assert res[1] < 1e-3
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.05)


def test_div_eta_identity_map_linear_field():
    g = make_grid("column1d", 1, 1, 17)
    c = compute_geometry(FlowMapState.rest(g), g)
    v = np.zeros((3,) + g.shape)
    v[2] = 3.0 * g.coords[2]
    assert np.allclose(div_eta_field(v, c, g), 3.0)
