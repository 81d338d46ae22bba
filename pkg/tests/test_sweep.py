import numpy as np
import pytest

from viscolimit.config import standard_config
from viscolimit.errors import ConfigError, NonPositiveValue
from viscolimit.sweep import SweepPlan, fit_rate, run_sweep, shared_dt


def test_fit_rate_exact_powers():
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    slope, r2 = fit_rate(zip(eps, eps))
    assert slope == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    slope, _ = fit_rate(zip(eps, np.sqrt(eps)))
    assert slope == pytest.approx(0.5, abs=1e-12)


def test_fit_rate_noisy_synthetic():
    rng = np.random.default_rng(0)
    eps = np.logspace(-1, -4, 7)
    vals = 3 * eps**0.8 * (1 + 0.01 * rng.standard_normal(eps.size))
    slope, r2 = fit_rate(zip(eps, vals))
    assert abs(slope - 0.8) <= 0.05 and r2 > 0.99


def test_fit_rate_refuses_bad_input():
    with pytest.raises(NonPositiveValue):
        fit_rate([(0.1, 1.0), (0.01, 0.0), (0.001, 0.5)])
    with pytest.raises(ValueError):
        fit_rate([(0.1, 1.0), (0.01, 0.5)])


@pytest.mark.parametrize("kw", [
    {"eps_list": ()},
    {"eps_list": (0.01, 0.1)},
    {"eps_list": (2.0,)},
    {"modes": ("euler",)},
    {"bc_kinds": ("free",)},
])
def test_plan_validation(kw):
    with pytest.raises(ConfigError):
        SweepPlan(standard_config(), **kw)


def test_zero_data_sweep_has_zero_differences():
    base = standard_config(grid={"n_z": 33}, initial={"preset": "zero"}, integrator={"t_final": 0.05})
    res = run_sweep(SweepPlan(base, eps_list=(0.1,)))
    viscous = res.select("no_slip", "viscoelastic")
    assert len(viscous) == 1 and viscous[0].status == "completed"
    r = viscous[0]
    assert r.sup_eta_diff == 0.0 and r.sup_v_diff == 0.0 and r.sup_grad_eta_diff == 0.0
    assert res.fitted_rates["no_slip/viscoelastic"]["sup_v_diff"]["flag"].startswith("refused")


def test_shared_dt_is_common_and_below_every_limit():
    base = standard_config(grid={"n_z": 65})
    plan = SweepPlan(base, eps_list=(1e-1, 1e-2))
    dt = shared_dt(plan)
    assert 0 < dt < base.integrator.t_final
    assert shared_dt(SweepPlan(base.with_overrides(integrator={"dt": 1e-3}))) == 1e-3


def test_small_sweep_records_and_alignment():
    base = standard_config(grid={"n_z": 65}, integrator={"t_final": 0.1, "scheme": "imex_viscous"})
    res = run_sweep(SweepPlan(base, eps_list=(1e-1, 1e-2, 1e-3), compute_energy_functional=False))
    recs = res.select("no_slip", "viscoelastic")
    assert [r.eps for r in recs] == [1e-1, 1e-2, 1e-3]
    assert all(r.status == "completed" for r in recs)
    diffs = [r.sup_v_diff for r in recs]
    assert diffs[0] > diffs[1] > diffs[2] > 0
    inviscid = res.select("no_slip", "viscoelastic", viscous_only=False)[-1]
    assert inviscid.eps == 0.0 and inviscid.sup_v_diff == 0.0
