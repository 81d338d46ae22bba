import numpy as np
import pytest

from viscolimit.config import (RunConfig, config_from_dict, evaluate, initial_state, parse_config, prepared_initial,
                               smooth_window, standard_config, standard_profile)
from viscolimit.errors import ConfigError


def test_minimal_column_config_fills_defaults():
    cfg = parse_config('[grid]\nmode = "column1d"\n')
    assert cfg == RunConfig()
    assert (cfg.grid.n_z, cfg.grid.L_z) == (257, 1.0)
    m = cfg.material
    assert (m.gamma, m.mu, m.lam, m.rho0) == (1.4, 1.0, 0.0, 1.0)
    assert cfg.bc.kind == "no_slip" and cfg.bc.alpha == 1.0
    assert cfg.integrator.t_final == 0.5
    assert cfg.initial.preset == "standard"


def test_gamma_below_one_is_rejected_with_constraint():
    with pytest.raises(ConfigError, match=r"material\.gamma must be > 1"):
        parse_config("[material]\ngamma = 0.9\n")


def test_negative_bulk_combination_rejected():
    with pytest.raises(ConfigError, match=r"2\*mu \+ 3\*lambda = -1"):
        parse_config("[material]\nmu = 1\nlambda = -1\n")


@pytest.mark.parametrize("text, key", [
    ("[grid]\nnz = 10\n", "grid.nz"),
    ("[solver]\nx = 1\n", "solver"),
    ("[material]\nlam = 0.1\n", "material.lam"),
])
def test_unknown_keys_rejected(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_type_errors_name_the_key():
    with pytest.raises(ConfigError, match=r"grid\.n_z must be an integer"):
        parse_config('[grid]\nn_z = "many"\n')
    with pytest.raises(ConfigError, match=r"bc\.kind"):
        parse_config('[bc]\nkind = "free"\n')


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[grid]\nn_z = 65\nmode = \n")


def test_hash_is_stable_and_sensitive():
    a = standard_config()
    assert a.hash() == standard_config().hash()
    assert a.hash() != a.with_eps(1e-3).hash()
    assert parse_config("").hash() == a.hash()
    b = standard_config(material={"eps": 1e-3}, integrator={"dt": 1e-4})
    assert config_from_dict(b.to_dict()) == b


def test_standard_profile_matches_pinned_fixture():
    z = np.linspace(0, 1, 1001)
    w = standard_profile(z)
    assert np.all(w[(z <= 0.05) | (z >= 0.45)] == 0.0)
    inner = (z >= 0.1) & (z <= 0.4)
    assert np.allclose(w[inner], 0.1 * np.exp(-(((z[inner] - 0.25) / 0.08) ** 2)), rtol=1e-14)
    assert smooth_window(np.array([0.3]), 0.05, 0.45, 0.05)[0] == 1.0


def test_standard_initial_state():
    cfg = standard_config(grid={"n_z": 65})
    g = cfg.make_grid()
    s = initial_state(cfg, g)
    assert np.array_equal(s.eta, g.coords)
    assert np.all(s.vel[1:] == 0.0)
    assert np.array_equal(prepared_initial(cfg, g).vel, s.vel)  # already compatible


def test_expression_evaluator_is_restricted():
    g = standard_config(grid={"n_z": 17}).make_grid()
    assert np.allclose(evaluate("sin(pi * z)", g), np.sin(np.pi * g.coords[2]))
    for bad in ("__import__('os')", "z.real", "open('x')", "lambda: 1"):
        with pytest.raises(ConfigError):
            evaluate(bad, g)


def test_custom_preset():
    text = '[grid]\nn_z = 33\n[initial]\npreset = "custom"\nv1 = "0.1 * z**2 * exp(-z)"\nphi3 = "0.01 * sin(pi * z)"\n'
    cfg = parse_config(text)
    g = cfg.make_grid()
    s = initial_state(cfg, g)
    z = g.coords[2]
    assert np.allclose(s.vel[0], 0.1 * z**2 * np.exp(-z))
    assert np.allclose(s.eta[2], z + 0.01 * np.sin(np.pi * z))
