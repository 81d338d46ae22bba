import warnings

import numpy as np
import pytest

from viscolimit.boundary import (BoundaryCondition, apply_bc, check_truncation, compat_project, compat_residuals,
                                 cutoff, cutoff_width, navier_wall_residual, top_closure)
from viscolimit.config import standard_profile
from viscolimit.errors import ConfigError, TruncationBreach
from viscolimit.geometry import FlowMapState, compute_geometry, wall_structure_residual
from viscolimit.grid import make_grid
from viscolimit.integrate import IntegratorConfig, run
from viscolimit.material import MaterialParams


def _random_state(g, seed=0, amp=0.01):
    rng = np.random.default_rng(seed)
    return FlowMapState(g.coords + amp * rng.standard_normal((3,) + g.shape), rng.standard_normal((3,) + g.shape))


def test_bc_validation():
    with pytest.raises(ConfigError):
        BoundaryCondition("free")
    with pytest.raises(ConfigError):
        BoundaryCondition("navier_slip", alpha=-1.0)


def test_no_slip_zeroes_wall_velocity_and_closes_top():
    g = make_grid("slab2d", 8, 1, 17)
    s = _random_state(g)
    out = apply_bc(s, MaterialParams(eps=0.1), BoundaryCondition("no_slip"), g)
    assert np.all(out.vel[..., 0] == 0.0)
    assert np.all(out.vel[..., -1] == 0.0)
    assert np.array_equal(out.eta[..., -1], g.coords[..., -1])
    assert np.array_equal(s.vel[..., 0], _random_state(g).vel[..., 0])  # input untouched


def test_navier_column_reduction_alpha_zero():
    g = make_grid("column1d", 1, 1, 33)
    s = FlowMapState.rest(g)
    s.vel[0, 0, 0] = np.cos(3 * g.z)
    s.vel[1, 0, 0] = 0.5 * np.sin(2 * g.z + 0.4)
    eps, mu = 0.05, 1.0
    out = apply_bc(s, MaterialParams(eps=eps, mu=mu), BoundaryCondition("navier_slip", alpha=0.0), g)
    h = g.dz

    def d3(f):
        return (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)

    for b in range(2):
        res = d3(out.eta[b, 0, 0]) + mu * eps * d3(out.vel[b, 0, 0])
        assert abs(res) < 1e-10
    assert out.vel[2, 0, 0, 0] == 0.0


def test_navier_slab_residual_after_application():
    g = make_grid("slab2d", 16, 1, 33)
    x, _, z = g.coords
    s = FlowMapState.rest(g)
    s.eta[0] += 0.02 * np.sin(2 * np.pi * x) * np.sin(3 * z)
    s.eta[2] += 0.01 * np.cos(2 * np.pi * x) * z * (1 - z)
    s.vel[0] = np.cos(2 * np.pi * x) * np.exp(-z)
    s.vel[1] = 0.3 * np.sin(2 * np.pi * x + 1.0)
    params = MaterialParams(eps=0.01)
    bc = BoundaryCondition("navier_slip", alpha=1.0)
    out = apply_bc(s, params, bc, g)
    assert np.max(np.abs(navier_wall_residual(out, params, bc, g))) < 1e-10


class _Strict:
    """Exposes only the named attributes of the wrapped object."""

    def __init__(self, obj, allowed):
        self._obj, self._allowed = obj, set(allowed)

    def __getattr__(self, name):
        if name not in self._allowed:
            raise AssertionError(f"inviscid branch read {name}")
        return getattr(self._obj, name)


def test_inviscid_navier_branch_reads_no_viscous_parameters():
    g = make_grid("column1d", 1, 1, 33)
    s = _random_state(g, 1)
    params = _Strict(MaterialParams(eps=0.0), {"eps"})
    bc = _Strict(BoundaryCondition("navier_slip"), {"kind"})
    out = apply_bc(s, params, bc, g)
    d3 = (-3 * out.eta[:2, ..., 0] + 4 * out.eta[:2, ..., 1] - out.eta[:2, ..., 2]) / (2 * g.dz)
    assert np.max(np.abs(d3)) < 1e-12


def test_top_closure_in_place():
    g = make_grid("column1d", 1, 1, 17)
    s = _random_state(g)
    assert top_closure(s, g) is s
    assert np.all(s.vel[..., -1] == 0.0)


def test_truncation_warning():
    g = make_grid("column1d", 1, 1, 65)
    s = FlowMapState.rest(g)
    s.vel[0] = standard_profile(g.coords[2])
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationBreach)
        assert not check_truncation(s, g)
    s.vel[0] = 0.1 * np.exp(-(((g.coords[2] - 0.8) / 0.08) ** 2))
    with pytest.warns(TruncationBreach):
        assert check_truncation(s, g)


def test_compact_bump_short_run_does_not_breach():
    g = make_grid("column1d", 1, 1, 129)
    s = FlowMapState.rest(g)
    s.vel[0] = standard_profile(g.coords[2])
    traj = run(s, MaterialParams(), BoundaryCondition(), g, IntegratorConfig(t_final=0.1, track_energy=False))
    assert not any(t["guard"] == "TruncationBreach" for t in traj.guard_trips)


def test_doubling_the_slab_height_leaves_interior_unchanged():
    cfg = IntegratorConfig(t_final=0.5, dt=5e-4, snapshot_every=1000, track_energy=False)
    out = []
    for n_z, L_z in ((257, 1.0), (513, 2.0)):
        g = make_grid("column1d", 1, 1, n_z, 1, 1, L_z)
        s = FlowMapState.rest(g)
        s.vel[0] = standard_profile(g.coords[2])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationBreach)
            traj = run(s, MaterialParams(), BoundaryCondition(), g, cfg)
        out.append(traj.snapshots[-1])
    a, b = out
    diff = max(np.max(np.abs(a.vel - b.vel[..., :257])), np.max(np.abs(a.eta - b.eta[..., :257])))
    assert diff < 1e-6


def test_cutoff_shape():
    s = np.linspace(0, 1.5, 31)
    chi = cutoff(s)
    assert chi[0] == 1.0 and np.all(chi[s >= 1] == 0.0)
    assert np.all(np.diff(chi) <= 0)
    # C^2 at s = 1: value, slope and curvature of 1 - (2s - 2s^3 + s^4) vanish there
    h = 1e-4
    assert abs(cutoff(1 - h)) < 1e-10 and abs(cutoff(1 - h) - 2 * cutoff(1 - 2 * h) + cutoff(1 - 3 * h)) < 1e-10


def test_compat_fixed_point_and_order0_blend():
    g = make_grid("column1d", 1, 1, 65)
    params = MaterialParams(eps=0.01)
    bc = BoundaryCondition("no_slip")
    s = FlowMapState.rest(g)
    s.vel[0] = standard_profile(g.coords[2])  # zero near the wall already
    out = compat_project(s, params, bc, g, order=0)
    assert np.allclose(out.vel, s.vel, atol=1e-15)

    s.vel[0] = np.exp(-g.coords[2])  # nonzero wall trace
    out = compat_project(s, params, bc, g, order=0)
    chi = cutoff(g.coords[2] / cutoff_width(g))
    expected = np.exp(-g.coords[2]) * (1 - chi)
    expected[..., -1] = 0.0
    assert np.allclose(out.vel[0], expected, atol=1e-15)
    assert np.all(out.vel[..., 0] == 0.0)


def test_order1_is_automatic_at_reference_state_when_inviscid():
    g = make_grid("column1d", 1, 1, 65)
    params = MaterialParams(eps=0.0)
    bc = BoundaryCondition("no_slip")
    s = FlowMapState.rest(g)
    s.vel[0] = np.sin(3 * g.coords[2]) * np.exp(-4 * g.coords[2])
    assert np.max(np.abs(compat_residuals(s, params, bc, g, 1))) < 1e-13


@pytest.mark.parametrize("kind", ["no_slip", "navier_slip"])
@pytest.mark.parametrize("eps", [0.0, 0.01])
def test_compat_projection_residuals(kind, eps):
    g = make_grid("column1d", 1, 1, 129)
    params = MaterialParams(eps=eps)
    bc = BoundaryCondition(kind)
    s = FlowMapState.rest(g)
    z = g.coords[2]
    s.vel[0] = 0.1 * np.exp(-z / 0.2)
    s.vel[2] = 0.05 * np.exp(-z / 0.3) * np.sin(4 * z + 0.3)
    out = compat_project(s, params, bc, g, order=1)
    assert np.max(np.abs(compat_residuals(out, params, bc, g, 0))) < 1e-10
    assert np.max(np.abs(compat_residuals(out, params, bc, g, 1))) < 1e-6


def test_no_slip_wall_kinetic_energy_is_zero_every_step():
    g = make_grid("column1d", 1, 1, 65)
    s = FlowMapState.rest(g)
    s.vel[0] = standard_profile(g.coords[2])
    traj = run(s, MaterialParams(eps=0.01), BoundaryCondition(), g,
               IntegratorConfig(t_final=0.05, snapshot_every=1, track_energy=False))
    assert all(np.all(sn.vel[..., 0] == 0.0) for sn in traj.snapshots)


def test_navier_wall_structure_stays_small_in_slab():
    g = make_grid("slab2d", 16, 1, 33)
    params = MaterialParams(eps=0.01)
    bc = BoundaryCondition("navier_slip")
    x, _, z = g.coords
    s = FlowMapState.rest(g)
    s.vel[0] = 0.05 * np.cos(2 * np.pi * x) * np.exp(-(((z - 0.25) / 0.1) ** 2))
    s.vel[2] = 0.05 * np.sin(2 * np.pi * x) * np.exp(-(((z - 0.25) / 0.1) ** 2))
    s = compat_project(s, params, bc, g, order=0)
    traj = run(s, params, bc, g, IntegratorConfig(t_final=0.05, snapshot_every=5, track_energy=False))
    worst = max(wall_structure_residual(compute_geometry(sn, g)) for sn in traj.snapshots)
    assert worst <= 10 * g.dz**2
