"""Time stepping of (eta, v).

Two schemes:

``rk4_explicit``
    Classical four-stage Runge-Kutta on d eta/dt = v, d v/dt = accel, with
    boundary values enforced at every stage.
``imex_viscous``
    Lie splitting. The eps-free part (pressure and elasticity) is advanced by
    one RK4 step; then the eps-weighted viscous terms are applied by backward
    Euler with the geometry frozen at the end of the explicit substep. The
    backward-Euler system is assembled as a sparse matrix and solved directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import BoundaryCondition, apply_bc, check_truncation, top_closure
from .diagnostics import basic_energy, boundary_work_rate, dissipation_rate
from .dynamics import _diff_matrices, momentum_rhs, viscous_matrix
from .errors import ConfigError, DtViolation, ImplicitSolveFailed, SimulationError, TruncationBreach
from .geometry import FlowMapState, compute_geometry
from .grid import Grid
from .material import MaterialParams, sound_speed

SCHEMES = ("rk4_explicit", "imex_viscous")


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control.

    With ``dt`` set the run uses a fixed step (rounded down so that the
    number of steps is a multiple of ``snapshot_every`` and ends exactly on
    ``t_final``); otherwise the step adapts to the stability limit, growing
    by at most 10% per step.
    """

    scheme: str = "rk4_explicit"
    cfl_adv: float = 0.4
    cfl_visc: float = 0.25
    t_final: float = 0.5
    max_steps: int = 1_000_000
    snapshot_every: int = 10
    dt: float | None = None
    track_energy: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"integrator.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.cfl_adv > 0 or not self.cfl_visc > 0:
            raise ConfigError("integrator.cfl_adv and integrator.cfl_visc must be > 0")
        if not self.t_final >= 0:
            raise ConfigError(f"integrator.t_final must be >= 0, got {self.t_final}")
        if self.snapshot_every < 1:
            raise ConfigError("integrator.snapshot_every must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"integrator.dt must be > 0, got {self.dt}")


@dataclass
class Trajectory:
    """Snapshots of one run plus the per-step energy log.

    ``energy_log`` columns are ``t, E, dissipation rate, boundary work rate``
    at every accepted step (including t = 0).
    """

    snapshots: list[FlowMapState] = field(default_factory=list)
    energy_log: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    guard_trips: list[dict] = field(default_factory=list)
    steps: int = 0
    status: str = "completed"
    dt_history: list[float] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def stable_dt(state: FlowMapState, params: MaterialParams, grid: Grid, cfg: IntegratorConfig) -> float:
    """Largest step allowed by the scheme's constraints at ``state``.

    The acoustic speed is combined with the unit shear-wave speed of the
    elastic term, ``c = sqrt(gamma q / f + elastic) + |v|``.
    """
    cache = compute_geometry(state, grid, params.j_floor)
    cs2 = float(np.max(sound_speed(cache.J, params))) ** 2
    if params.elastic_on:
        rho = np.asarray(params.rho0, dtype=float)
        cs2 += float(np.max(rho)) / float(np.min(rho))
    speed = math.sqrt(cs2) + float(np.max(np.abs(state.vel)))
    h = min(grid.spacing(ax) for ax in grid.active_axes())
    dt = cfg.cfl_adv * h / speed
    if cfg.scheme == "rk4_explicit" and params.eps > 0:
        nu = params.eps * (2.0 * params.mu + params.lam) / float(np.min(params.rho0_field(grid)))
        dt = min(dt, cfg.cfl_visc * h * h / nu)
    return dt


def _rk4(state, dt, params, grid, bc_fn, forcing=None):
    def stage(s):
        s = bc_fn(s)
        cache = compute_geometry(s, grid, params.j_floor)
        return s, momentum_rhs(s, cache, params, grid, forcing=forcing).accel

    s0, a1 = stage(state)
    s1, a2 = stage(FlowMapState(s0.eta + 0.5 * dt * s0.vel, s0.vel + 0.5 * dt * a1))
    s2, a3 = stage(FlowMapState(s0.eta + 0.5 * dt * s1.vel, s0.vel + 0.5 * dt * a2))
    s3, a4 = stage(FlowMapState(s0.eta + dt * s2.vel, s0.vel + dt * a3))
    eta = s0.eta + dt / 6.0 * (s0.vel + 2.0 * s1.vel + 2.0 * s2.vel + s3.vel)
    vel = s0.vel + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return bc_fn(FlowMapState(eta, vel, state.t + dt))


def _wall_rows(grid: Grid) -> np.ndarray:
    return np.flatnonzero(np.broadcast_to(np.arange(grid.n_z) == 0, grid.shape).ravel())


def _top_rows(grid: Grid) -> np.ndarray:
    return np.flatnonzero(np.broadcast_to(np.arange(grid.n_z) == grid.n_z - 1, grid.shape).ravel())


def _implicit_viscous(star: FlowMapState, dt: float, params: MaterialParams, bc: BoundaryCondition,
                      grid: Grid) -> FlowMapState:
    """Backward-Euler viscous substep ``rho0 (v - v*) = dt V(eta*) v`` with wall and top rows replaced."""
    N = grid.n_nodes
    cache = compute_geometry(star, grid, params.j_floor)
    rho = np.ravel(params.rho0_field(grid))
    rho3 = np.tile(rho, 3)
    base = (sp.diags(rho3) - dt * viscous_matrix(cache, params, grid)).tocsr()
    b = rho3 * star.vel.ravel()

    wall, top = _wall_rows(grid), _top_rows(grid)
    ident = [comp * N + top for comp in range(3)]
    ident += [comp * N + wall for comp in range(3) if bc.kind == "no_slip" or comp == 2]
    ident = np.concatenate(ident)
    replaced = np.zeros(3 * N, dtype=bool)
    replaced[ident] = True
    extra = sp.csr_matrix((np.ones(ident.size), (ident, ident)), shape=(3 * N, 3 * N))
    b[ident] = 0.0
    if bc.kind == "navier_slip":
        D = _diff_matrices(grid)
        A = cache.A.reshape(3, 3, N)
        a33 = cache.a[2, 2].ravel()[wall]
        rho_w = rho[wall]
        zero = sp.csr_matrix((N, N))
        d3eta = (-3.0 * star.eta[..., 0] + 4.0 * star.eta[..., 1] - star.eta[..., 2]) / (2.0 * grid.dz)
        for beta in range(2):
            # 2 mu eps S_{beta 3} a33 = mu eps a33 (A_3m D_m v_beta + A_{beta m} D_m v_3)
            blk_bb, blk_b3 = zero, zero
            for m in grid.active_axes():
                blk_bb = blk_bb + D[m].multiply(A[2, m][:, None])
                blk_b3 = blk_b3 + D[m].multiply(A[beta, m][:, None])
            blocks = [blk_bb if c == beta else (blk_b3 if c == 2 else zero) for c in range(3)]
            rows = sp.hstack(blocks).tocsr()[wall].multiply((params.mu * params.eps * a33)[:, None])
            idx = beta * N + wall
            # local Robin terms; the wall position follows eta_wall = eta*_wall + dt (v - v*)
            diag = bc.alpha * params.eps * np.abs(a33) - 1.5 * rho_w * dt / grid.dz
            lift = sp.csr_matrix((np.ones(wall.size), (idx, np.arange(wall.size))), shape=(3 * N, wall.size))
            extra = extra + lift @ sp.csr_matrix(rows)
            extra = extra + sp.csr_matrix((diag, (idx, idx)), shape=(3 * N, 3 * N))
            replaced[idx] = True
            b[idx] = -rho_w * d3eta[beta].ravel() - 1.5 * rho_w * dt / grid.dz * star.vel[beta, ..., 0].ravel()
    M = (sp.diags((~replaced).astype(float)) @ base + extra).tocsr()
    x = spla.spsolve(M, b)
    res = np.linalg.norm(M @ x - b)
    scale = max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(res) or res > 1e-10 * scale:
        for _ in range(3):  # iterative refinement
            x = x + spla.spsolve(M, b - M @ x)
        res = np.linalg.norm(M @ x - b)
        if not np.isfinite(res) or res > 1e-10 * scale:
            raise ImplicitSolveFailed(f"viscous solve residual {res:.3e} (relative tol 1e-10)")
    vel = x.reshape(star.vel.shape)
    eta = star.eta.copy()
    if bc.kind == "navier_slip":
        eta[:2, ..., 0] += dt * (vel[:2, ..., 0] - star.vel[:2, ..., 0])
    return top_closure(FlowMapState(eta, vel, star.t), grid)


def step(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid,
         cfg: IntegratorConfig, dt: float, forcing=None) -> FlowMapState:
    """Advance one step of size ``dt``; raises ``DtViolation`` if ``dt`` exceeds the stability limit."""
    limit = stable_dt(state, params, grid, cfg)
    if dt > limit * (1.0 + 1e-12):
        raise DtViolation(f"dt = {dt:.4e} exceeds the {cfg.scheme} limit {limit:.4e}")

    if cfg.scheme == "rk4_explicit" or params.eps == 0.0:
        return _rk4(state, dt, params, grid, lambda s: apply_bc(s, params, bc, grid), forcing)

    inviscid = params.with_eps(0.0)
    if bc.kind == "no_slip":
        def bc_fn(s):
            return apply_bc(s, inviscid, bc, grid)
    else:
        def bc_fn(s):
            s = top_closure(s.copy(), grid)
            s.vel[2, ..., 0] = 0.0
            return s
    star = _rk4(state, dt, inviscid, grid, bc_fn, forcing)
    return _implicit_viscous(star, dt, params, bc, grid)


def _fixed_schedule(dt: float, cfg: IntegratorConfig) -> tuple[int, float]:
    n = max(1, math.ceil(cfg.t_final / dt - 1e-9))
    k = cfg.snapshot_every
    n = k * math.ceil(n / k)
    return n, cfg.t_final / n


def run(initial: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid,
        cfg: IntegratorConfig, strict: bool = True, forcing=None) -> Trajectory:
    """Integrate from ``initial`` to ``cfg.t_final``.

    Snapshots are stored every ``cfg.snapshot_every`` steps and at the end.
    Guard trips (truncation breaches, simulation errors) are logged in
    ``Trajectory.guard_trips``; with ``strict=False`` a simulation error ends
    the run with ``status = "failed: ..."`` instead of raising.
    """
    traj = Trajectory()
    state = apply_bc(initial, params, bc, grid)
    state.t = 0.0
    traj.snapshots.append(state.copy())
    log = []

    def record(s):
        if cfg.track_energy:
            log.append((s.t, basic_energy(s, params, grid), dissipation_rate(s, params, grid),
                        boundary_work_rate(s, params, bc, grid)))

    record(state)
    if cfg.dt is not None:
        n_steps, dt_fixed = _fixed_schedule(cfg.dt, cfg)
        if n_steps > cfg.max_steps:
            raise ConfigError(f"integrator.max_steps ({cfg.max_steps}) is below the {n_steps} steps required")
    else:
        n_steps, dt_fixed = cfg.max_steps, None

    breached = False
    dt_prev = None
    try:
        for n in range(n_steps):
            if dt_fixed is None:
                remaining = cfg.t_final - state.t
                if remaining <= 1e-14 * max(1.0, cfg.t_final):
                    break
                dt = stable_dt(state, params, grid, cfg)
                if dt_prev is not None:
                    dt = min(dt, 1.1 * dt_prev)
                if dt >= remaining:
                    dt = remaining
                else:
                    dt = min(dt, 0.5 * remaining) if dt > 0.5 * remaining else dt
            else:
                dt = dt_fixed
            state = step(state, params, bc, grid, cfg, dt, forcing)
            if dt_fixed is not None:
                state.t = (n + 1) * dt_fixed
            traj.steps += 1
            traj.dt_history.append(dt)
            dt_prev = dt
            record(state)
            last = dt_fixed is not None and n == n_steps - 1
            if traj.steps % cfg.snapshot_every == 0 or last:
                if not breached:
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always", TruncationBreach)
                        breached = check_truncation(state, grid)
                    if breached:
                        traj.guard_trips.append({"guard": "TruncationBreach", "t": state.t,
                                                 "message": str(caught[0].message)})
                        warnings.warn(str(caught[0].message), TruncationBreach, stacklevel=2)
                traj.snapshots.append(state.copy())
        else:
            if dt_fixed is None and cfg.t_final - state.t > 1e-14 * max(1.0, cfg.t_final):
                raise SimulationError(f"max_steps = {cfg.max_steps} reached at t = {state.t:.4g}")
        if traj.snapshots[-1].t != state.t:
            traj.snapshots.append(state.copy())
    except SimulationError as exc:
        traj.guard_trips.append({"guard": type(exc).__name__, "t": state.t, "message": str(exc)})
        traj.status = f"failed: {type(exc).__name__}"
        if strict:
            raise
    traj.energy_log = np.array(log, dtype=float).reshape(-1, 4)
    return traj


def with_scheme(cfg: IntegratorConfig, **kw) -> IntegratorConfig:
    return replace(cfg, **kw)
