import numpy as np
import pytest
from scipy.integrate import quad

from viscolimit.errors import ConfigError, DegenerateMap
from viscolimit.geometry import FlowMapState
from viscolimit.grid import make_grid
from viscolimit.material import MaterialParams, dJ_dq_consistency, pressure, q_potential, sound_speed


def test_pressure_examples():
    assert np.all(pressure(np.ones(4), MaterialParams()) == 1.0)
    assert pressure(np.array(0.5), MaterialParams(gamma=2.0)) == pytest.approx(4.0, rel=1e-15)
    assert pressure(np.array(1.0), MaterialParams(gamma=1.4, rho0=2.0)) == pytest.approx(2.639015821545788, rel=1e-14)


def test_pressure_rejects_degenerate_J():
    with pytest.raises(DegenerateMap):
        pressure(np.array([1.0, 0.0]), MaterialParams())


def test_q_potential_examples():
    assert q_potential(np.array(1.0), MaterialParams()) == 0.0
    assert q_potential(np.array(3.0), MaterialParams(gamma=2.0)) == pytest.approx(2.0)
    p = MaterialParams(gamma=1.4)
    val = float(q_potential(np.array(2.0), p))
    assert val == pytest.approx((2**0.4 - 1) / 0.4, rel=1e-14)
    ref, _ = quad(lambda s: s ** (1.4 - 2.0), 1.0, 2.0, epsabs=1e-13)
    assert abs(val - ref) < 1e-10


def test_monotone_in_parameter_grid():
    J = np.linspace(0.2, 3.0, 200)
    f = np.linspace(0.2, 3.0, 200)
    for gamma in (1.1, 1.4, 2.0, 3.0):
        p = MaterialParams(gamma=gamma)
        assert np.all(np.diff(pressure(J, p)) < 0)
        assert np.all(np.diff(q_potential(f, p)) > 0)


def test_pressure_equals_density_power():
    rho0 = np.linspace(0.6, 1.8, 11)
    J = np.linspace(0.7, 1.3, 11)
    p = MaterialParams(gamma=1.7, rho0=rho0)
    assert np.allclose(pressure(J, p), (rho0 / J) ** 1.7, rtol=1e-14)


def test_sound_speed_reference_state():
    assert sound_speed(np.array(1.0), MaterialParams(gamma=1.4)) == pytest.approx(np.sqrt(1.4))


@pytest.mark.parametrize("kw, key", [
    ({"gamma": 0.9}, "gamma"),
    ({"mu": 0.0}, "mu"),
    ({"mu": 1.0, "lam": -1.0}, "lambda"),
    ({"eps": 2.0}, "eps"),
    ({"rho0": 3.0}, "rho0"),
])
def test_params_validation(kw, key):
    with pytest.raises(ConfigError, match=key):
        MaterialParams(**kw)


def _dilation(g, t, sigma=0.2):
    st = FlowMapState.rest(g)
    st.eta[2] = g.coords[2] * np.exp(sigma * t)
    st.vel[2] = sigma * st.eta[2]
    st.t = t
    return st


def test_dJ_dq_consistency_static_and_dilation():
    g = make_grid("column1d", 1, 1, 33)
    p = MaterialParams(gamma=1.4)
    assert dJ_dq_consistency(_dilation(g, 0.0, 0.0), _dilation(g, 0.1, 0.0), g, p) == 0.0
    res = [dJ_dq_consistency(_dilation(g, 0.3 - dt / 2), _dilation(g, 0.3 + dt / 2), g, p) for dt in (0.2, 0.1, 0.05)]
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.05)
    assert res[1] / res[2] == pytest.approx(4.0, rel=0.05)
