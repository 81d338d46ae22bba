import numpy as np
import pytest

from viscolimit.grid import diff, div_rho_grad, gradient, integrate_boundary, integrate_volume, make_grid, second_diff


def test_spacings_and_node_counts():
    assert make_grid("column1d", 1, 1, 65, 1, 1, 1).dz == pytest.approx(1 / 64, abs=0)
    assert make_grid("slab2d", 32, 1, 33, 1, 1, 2).dz == 0.0625
    g = make_grid("slab3d", 8, 8, 9, 1, 1, 1)
    assert g.n_nodes == 576
    assert g.coords.shape == (3, 8, 8, 9)


@pytest.mark.parametrize("args", [
    ("column1d", 1, 1, 7, 1, 1, 1),
    ("column1d", 2, 1, 33, 1, 1, 1),
    ("slab3d", 0, 4, 33, 1, 1, 1),
    ("slab3d", 4, 4, 33, 1, -1, 1),
    ("slab2d", 4, 2, 33, 1, 1, 1),
    ("cube", 4, 4, 33, 1, 1, 1),
])
def test_make_grid_rejects(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_diff_exact_on_linear_and_quadratic():
    g = make_grid("column1d", 1, 1, 17, 1, 1, 2.0)
    z = g.coords[2]
    assert np.max(np.abs(diff(z, 2, g) - 1.0)) < 1e-13
    assert np.max(np.abs(diff(z**2, 2, g) - 2 * z)) < 1e-12
    assert np.max(np.abs(second_diff(z**2, 2, g) - 2.0)) < 1e-10


def test_diff_second_order_rate():
    errs = []
    for n in (33, 65, 129):
        g = make_grid("column1d", 1, 1, n)
        z = g.coords[2]
        errs.append(np.max(np.abs(diff(np.sin(np.pi * z), 2, g) - np.pi * np.cos(np.pi * z))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - 2.0) < 0.2), rates


def test_tangential_diff_is_periodic_and_spectrally_sane():
    g = make_grid("slab3d", 32, 16, 9, 2.0, 1.0, 1.0)
    x, y, _ = g.coords
    f = np.sin(np.pi * x) * np.cos(2 * np.pi * y)
    fx = diff(f, 0, g)
    # centered difference of a Fourier mode: exact symbol sin(k h) / h
    k, h = np.pi, g.dx
    assert np.allclose(fx, np.sin(k * h) / h * np.cos(np.pi * x) * np.cos(2 * np.pi * y), atol=1e-12)


def test_diff_linear_and_tangentially_constant():
    rng = np.random.default_rng(3)
    g = make_grid("slab3d", 6, 5, 10)
    f, h = rng.standard_normal((2,) + g.shape)
    a, b = rng.standard_normal(2)
    for ax in range(3):
        assert np.allclose(diff(a * f + b * h, ax, g), a * diff(f, ax, g) + b * diff(h, ax, g), atol=1e-10)
    col = np.broadcast_to(rng.standard_normal(g.n_z), g.shape)
    assert np.all(diff(col, 0, g) == 0.0) and np.all(diff(col, 1, g) == 0.0)


def test_gradient_stacks_axes():
    g = make_grid("slab2d", 8, 1, 12)
    v = np.random.default_rng(0).standard_normal((3,) + g.shape)
    G = gradient(v, g)
    assert G.shape == (3, 3) + g.shape
    assert np.array_equal(G[:, 2], diff(v, 2, g))


def test_div_rho_grad_matches_product_rule_on_smooth_data():
    errs = []
    for n in (33, 65, 129):
        g = make_grid("column1d", 1, 1, n)
        z = g.coords[2]
        rho = 1.0 + 0.3 * z
        f = np.sin(2 * z)
        exact = 0.3 * 2 * np.cos(2 * z) - rho * 4 * np.sin(2 * z)
        errs.append(np.max(np.abs(div_rho_grad(f, rho, g) - exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.7), rates


def test_integrals():
    g = make_grid("column1d", 1, 1, 33)
    z = g.coords[2]
    assert integrate_volume(np.ones(g.shape), g) == pytest.approx(1.0, abs=1e-15)
    assert integrate_volume(z, g) == pytest.approx(0.5, abs=1e-15)
    e = [abs(integrate_volume(make_grid("column1d", 1, 1, n).coords[2] ** 2, make_grid("column1d", 1, 1, n)) - 1 / 3)
         for n in (33, 65)]
    assert e[0] / e[1] == pytest.approx(4.0, rel=0.02)
    g3 = make_grid("slab3d", 4, 4, 9, 2.0, 3.0, 1.0)
    assert integrate_boundary(np.ones(g3.shape), g3) == pytest.approx(6.0)


def test_integrate_volume_bitwise_repeatable():
    g = make_grid("slab3d", 8, 8, 33)
    f = np.random.default_rng(1).standard_normal(g.shape)
    assert integrate_volume(f, g) == integrate_volume(f.copy(), g)
