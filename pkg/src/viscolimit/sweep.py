"""The vanishing-viscosity experiment: an eps-family of runs plus the eps = 0 limit."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import RunConfig, prepared_initial
from .diagnostics import boundary_layer_indicator, energy_functional
from .errors import ConfigError, NonPositiveValue, SimulationError
from .geometry import FlowMapState
from .grid import gradient, integrate_volume
from .integrate import run, stable_dt

DEFAULT_EPS = tuple(10.0 ** -k for k in (1.0, 1.5, 2.0, 2.5, 3.0))
SWEEP_MODES = ("viscoelastic", "ns_contrast")
DT_SAFETY = 0.8


@dataclass(frozen=True)
class SweepPlan:
    """An eps-family over the requested modes and boundary conditions.

    ``bl_window`` is the fraction of ``t_final`` over which the boundary-layer
    indicator is maximized (the default skips the initial transient).
    """

    base_config: RunConfig
    eps_list: tuple[float, ...] = DEFAULT_EPS
    include_inviscid: bool = True
    modes: tuple[str, ...] = ("viscoelastic",)
    bc_kinds: tuple[str, ...] = ("no_slip",)
    m_impl: int = 2
    bl_window: tuple[float, float] = (0.5, 1.0)
    compute_energy_functional: bool = True
    workers: int = 1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if not eps:
            raise ConfigError("sweep.eps_list must not be empty")
        if any(not 0 < e <= 1 for e in eps):
            raise ConfigError("sweep.eps_list values must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("sweep.eps_list must be strictly decreasing")
        for m in self.modes:
            if m not in SWEEP_MODES:
                raise ConfigError(f"sweep.modes entries must be in {SWEEP_MODES}, got {m!r}")
        for b in self.bc_kinds:
            if b not in ("no_slip", "navier_slip"):
                raise ConfigError(f"sweep.bc_kinds entries must be no_slip or navier_slip, got {b!r}")


@dataclass
class RunRecord:
    eps: float
    bc: str
    mode: str
    status: str
    sup_eta_diff: float = math.nan
    sup_v_diff: float = math.nan
    sup_grad_eta_diff: float = math.nan
    max_energy_functional: float = math.nan
    max_bl_indicator: float = math.nan
    guard_trips: list = field(default_factory=list)
    wall_limit_residual: float = math.nan


@dataclass
class SweepResult:
    records: list[RunRecord]
    fitted_rates: dict
    layer_exponent: dict
    dt: float
    t_final: float

    def select(self, bc: str, mode: str, viscous_only: bool = True) -> list[RunRecord]:
        return [r for r in self.records if r.bc == bc and r.mode == mode and (r.eps > 0 or not viscous_only)]

    def to_dict(self) -> dict:
        return {"records": [asdict(r) for r in self.records], "fitted_rates": self.fitted_rates,
                "layer_exponent": self.layer_exponent, "dt": self.dt, "t_final": self.t_final}


def fit_rate(points) -> tuple[float, float]:
    """Least-squares slope of log(value) against log(eps), and r^2."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError(f"fit_rate needs at least 3 points, got {len(pts)}")
    if any(not (e > 0 and v > 0) for e, v in pts):
        raise NonPositiveValue("fit_rate needs strictly positive eps and values")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _run_config(plan: SweepPlan, eps: float, bc: str, mode: str) -> RunConfig:
    return plan.base_config.with_overrides(material={"eps": eps, "elastic_on": mode == "viscoelastic"},
                                           bc={"kind": bc})


def shared_dt(plan: SweepPlan) -> float:
    """One fixed step for the whole family so snapshot times coincide."""
    if plan.base_config.integrator.dt is not None:
        return plan.base_config.integrator.dt
    dts = []
    for bc in plan.bc_kinds:
        for mode in plan.modes:
            for eps in plan.eps_list + ((0.0,) if plan.include_inviscid else ()):
                cfg = _run_config(plan, eps, bc, mode)
                grid = cfg.make_grid()
                s0 = prepared_initial(cfg, grid)
                dts.append(stable_dt(s0, cfg.make_params(grid), grid, cfg.make_integrator()))
    return DT_SAFETY * min(dts)


def _execute(args):
    plan, eps, bc, mode, dt = args
    cfg = _run_config(plan, eps, bc, mode)
    cfg = cfg.with_overrides(integrator={"dt": dt})
    grid = cfg.make_grid()
    params = cfg.make_params(grid)
    bcond = cfg.make_bc()
    out = {"eps": eps, "bc": bc, "mode": mode, "snapshots": [], "guard_trips": [], "status": "completed",
           "efun": math.nan}
    try:
        init = prepared_initial(cfg, grid)
        integ = replace(cfg.make_integrator(), track_energy=False)
        traj = run(init, params, bcond, grid, integ, strict=False)
    except SimulationError as exc:
        out["status"] = f"failed: {type(exc).__name__}"
        out["guard_trips"] = [{"guard": type(exc).__name__, "t": 0.0, "message": str(exc)}]
        return out
    out["snapshots"] = [(s.t, s.eta, s.vel) for s in traj.snapshots]
    out["guard_trips"] = traj.guard_trips
    out["status"] = traj.status
    if traj.completed and plan.compute_energy_functional:
        out["efun"] = float(np.max(energy_functional(traj.snapshots, params, grid, plan.m_impl)))
    return out


def run_sweep(plan: SweepPlan) -> SweepResult:
    """Run every (bc, mode, eps) combination and compare against the eps = 0 run.

    Runs are independent and may execute in worker processes
    (``plan.workers > 1``); assembly happens in plan order so the result does
    not depend on the worker count.
    """
    dt = shared_dt(plan)
    jobs = []
    for bc in plan.bc_kinds:
        for mode in plan.modes:
            eps_all = plan.eps_list + ((0.0,) if plan.include_inviscid else ())
            jobs += [(plan, eps, bc, mode, dt) for eps in eps_all]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            outs = list(pool.map(_execute, jobs))
    else:
        outs = [_execute(j) for j in jobs]

    base = plan.base_config
    grid = base.make_grid()
    t_final = base.integrator.t_final
    lo, hi = plan.bl_window[0] * t_final, plan.bl_window[1] * t_final
    ref = {(o["bc"], o["mode"]): o for o in outs if o["eps"] == 0.0 and o["status"] == "completed"}

    records = []
    for o in outs:
        rec = RunRecord(eps=o["eps"], bc=o["bc"], mode=o["mode"], status=o["status"],
                        guard_trips=o["guard_trips"], max_energy_functional=o["efun"])
        snaps = o["snapshots"]
        if o["status"] == "completed" and snaps:
            bl = [boundary_layer_indicator(FlowMapState(eta, vel, t), grid)
                  for t, eta, vel in snaps if lo - 1e-12 <= t <= hi + 1e-12]
            rec.max_bl_indicator = max(bl) if bl else math.nan
            r = ref.get((o["bc"], o["mode"]))
            if r is not None and len(r["snapshots"]) == len(snaps):
                de, dv, dg = 0.0, 0.0, 0.0
                for (t, eta, vel), (t0, eta0, vel0) in zip(snaps, r["snapshots"]):
                    if abs(t - t0) > 1e-12 * max(1.0, t_final):
                        raise RuntimeError("sweep snapshots are not aligned in time")
                    d_eta = eta - eta0
                    de = max(de, math.sqrt(integrate_volume(np.sum(d_eta**2, axis=0), grid)))
                    dv = max(dv, math.sqrt(integrate_volume(np.sum((vel - vel0) ** 2, axis=0), grid)))
                    gd = gradient(d_eta, grid)
                    dg = max(dg, math.sqrt(integrate_volume(np.sum(gd**2, axis=(0, 1)), grid)))
                rec.sup_eta_diff, rec.sup_v_diff, rec.sup_grad_eta_diff = de, dv, dg
            if o["eps"] == 0.0 and o["bc"] == "navier_slip":
                rho_w = base.make_params(grid).rho0_field(grid)[..., 0]
                rec.wall_limit_residual = max(float(np.max(np.abs(rho_w * _wall_d3(eta[:2], grid.dz))))
                                              for _, eta, _ in snaps)
        records.append(rec)

    rates, layer = {}, {}
    for bc in plan.bc_kinds:
        for mode in plan.modes:
            key = f"{bc}/{mode}"
            viscous = [r for r in records if r.bc == bc and r.mode == mode and r.eps > 0 and r.status == "completed"]
            rates[key] = {}
            for name in ("sup_eta_diff", "sup_v_diff", "sup_grad_eta_diff"):
                pts = [(r.eps, getattr(r, name)) for r in viscous if np.isfinite(getattr(r, name))]
                rates[key][name] = _safe_fit(pts)
            layer[key] = _safe_fit([(r.eps, r.max_bl_indicator) for r in viscous if np.isfinite(r.max_bl_indicator)])
    return SweepResult(records=records, fitted_rates=rates, layer_exponent=layer, dt=dt, t_final=t_final)


def _wall_d3(f: np.ndarray, dz: float) -> np.ndarray:
    """One-sided second-order d_3 at the wall."""
    return (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * dz)


def _safe_fit(pts) -> dict:
    if len(pts) < 3:
        return {"slope": None, "r2": None, "flag": f"refused: only {len(pts)} successful points"}
    try:
        slope, r2 = fit_rate(pts)
    except NonPositiveValue as exc:
        return {"slope": None, "r2": None, "flag": f"refused: {exc}"}
    return {"slope": slope, "r2": r2, "flag": None}
