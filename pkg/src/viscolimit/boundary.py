"""Wall and top boundary conditions, and compatibility projection of initial data.

The wall is the plane z = 0 with outward normal (0, 0, -1). Two conditions are
supported:

* ``no_slip``: v = 0 on the wall, so wall positions stay frozen at eta_0.
* ``navier_slip``: v_3 = 0 and, for beta = 1, 2, the Robin relation

      rho0 d_3 eta_beta + 2 mu eps (S_eta v)_{beta 3} a_33 + alpha eps |a_33| v_beta = 0

  evaluated with the one-sided second-order ``diff`` at the wall nodes. At
  eps = 0 the relation reduces to d_3 eta_beta = 0.

Wall values are realized directly on the wall nodes (the one-sided stencil
plays the role of the ghost node).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import momentum_rhs, strain_rate
from .errors import ConfigError, NonConvergedGhost, ProjectionFailed, TruncationBreach
from .geometry import FlowMapState, compute_geometry
from .grid import Grid, diff
from .material import MaterialParams

BC_KINDS = ("no_slip", "navier_slip")
TRUNCATION_TOL = 1e-8
_WALL_ROWS = 8


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "no_slip"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigError(f"bc.kind must be one of {BC_KINDS}, got {self.kind!r}")
        if not self.alpha >= 0:
            raise ConfigError(f"bc.alpha must be >= 0, got {self.alpha}")


def _wall_view(state: FlowMapState, grid: Grid) -> tuple[FlowMapState, Grid]:
    """The lowest few z-rows as a stand-alone state; enough for wall stencils."""
    sub = Grid(grid.mode, grid.n_x, grid.n_y, _WALL_ROWS, grid.L_x, grid.L_y, grid.dz * (_WALL_ROWS - 1))
    return FlowMapState(state.eta[..., :_WALL_ROWS], state.vel[..., :_WALL_ROWS], state.t), sub


def _rho0_wall(params: MaterialParams, grid: Grid) -> np.ndarray:
    return params.rho0_field(grid)[..., 0]


def navier_wall_residual(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition,
                         grid: Grid) -> np.ndarray:
    """Robin combination at the wall nodes, shape ``(2, n_x, n_y)``."""
    st, sub = _wall_view(state, grid)
    d3eta = diff(st.eta[:2], 2, sub)[..., 0]
    res = _rho0_wall(params, grid) * d3eta
    if params.eps == 0.0:
        return res
    cache = compute_geometry(st, sub, params.j_floor)
    a33 = cache.a[2, 2, ..., 0]
    S = strain_rate(st.vel, cache, sub)
    res = res + 2.0 * params.mu * params.eps * S[:2, 2, ..., 0] * a33
    res = res + bc.alpha * params.eps * np.abs(a33) * st.vel[:2, ..., 0]
    return res


def top_closure(state: FlowMapState, grid: Grid) -> FlowMapState:
    """Hold the far field at rest: v = 0 and eta = X on the top row (in place)."""
    state.vel[..., -1] = 0.0
    state.eta[..., -1] = grid.coords[..., -1]
    return state


def truncation_level(state: FlowMapState, grid: Grid) -> float:
    """max of |v| and |eta - X| over z > 0.9 L_z."""
    mask = grid.z > 0.9 * grid.L_z
    disp = state.eta[..., mask] - grid.coords[..., mask]
    return float(max(np.max(np.abs(state.vel[..., mask])), np.max(np.abs(disp))))


def check_truncation(state: FlowMapState, grid: Grid, tol: float = TRUNCATION_TOL) -> bool:
    """Warn with ``TruncationBreach`` if the disturbance reached the top tenth of the slab."""
    level = truncation_level(state, grid)
    if level > tol:
        warnings.warn(f"disturbance {level:.2e} above z = 0.9 L_z at t = {state.t:.4g}", TruncationBreach,
                      stacklevel=2)
        return True
    return False


def apply_bc(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid,
             max_iter: int = 50) -> FlowMapState:
    """Return a copy of ``state`` with wall and top values enforced.

    Under ``navier_slip`` with eps > 0 the tangential wall velocity is found by
    a pointwise Newton-Jacobi iteration on the discrete Robin relation; the
    relation is affine in the wall value with slope
    ``alpha eps |a33| - 3 mu eps A33 a33 / (2 dz)``. Tangential derivatives
    couple neighboring wall nodes, hence the iteration (it converges in one
    pass in column mode).
    """
    out = top_closure(state.copy(), grid)
    if bc.kind == "no_slip":
        out.vel[..., 0] = 0.0
        return out
    out.vel[2, ..., 0] = 0.0
    if params.eps == 0.0:
        # inviscid limit: one-sided d_3 eta_beta = 0 and d_3 v_beta = 0 at the wall
        out.eta[:2, ..., 0] = (4.0 * out.eta[:2, ..., 1] - out.eta[:2, ..., 2]) / 3.0
        out.vel[:2, ..., 0] = (4.0 * out.vel[:2, ..., 1] - out.vel[:2, ..., 2]) / 3.0
        return out

    st, sub = _wall_view(out, grid)
    cache = compute_geometry(st, sub, params.j_floor)
    a33 = cache.a[2, 2, ..., 0]
    A33 = cache.A[2, 2, ..., 0]
    slope = bc.alpha * params.eps * np.abs(a33) - 1.5 * params.mu * params.eps * A33 * a33 / grid.dz
    if np.min(np.abs(slope)) < 1e-14:
        raise NonConvergedGhost("navier_slip wall solve is singular (alpha |a33| balances 3 mu A33 a33 / 2dz)")
    scale = 1.0 + np.max(np.abs(slope)) * max(1.0, float(np.max(np.abs(out.vel[:2, ..., :3]))))
    for _ in range(max_iter):
        res = navier_wall_residual(out, params, bc, grid)
        if np.max(np.abs(res)) <= 1e-13 * scale:
            return out
        out.vel[:2, ..., 0] -= res / slope
    res = navier_wall_residual(out, params, bc, grid)
    if np.max(np.abs(res)) <= 1e-11 * scale:
        return out
    raise NonConvergedGhost(f"navier_slip wall iteration stalled at residual {np.max(np.abs(res)):.3e}")


# --- compatibility projection -------------------------------------------------

def cutoff(s: np.ndarray) -> np.ndarray:
    """Smooth cutoff: 1 at s = 0, 0 for s >= 1, C^2 at s = 1.

    ``chi(s) = 1 - (2 s - 2 s^3 + s^4)`` on [0, 1].
    """
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return 1.0 - (2.0 * s - 2.0 * s**3 + s**4)


def cutoff_width(grid: Grid) -> float:
    return 8.0 * grid.dz


def _wall_accel(state: FlowMapState, params: MaterialParams, grid: Grid) -> np.ndarray:
    st, sub = _wall_view(state, grid)
    cache = compute_geometry(st, sub, params.j_floor)
    acc = momentum_rhs(st, cache, params, sub).accel
    return acc[..., 0]


def _robin_rate(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid) -> np.ndarray:
    """d/dt of the Robin combination along the flow, by a centered difference in the state direction."""
    acc = momentum_rhs(state, compute_geometry(state, grid, params.j_floor), params, grid).accel
    h = 1e-5
    plus = FlowMapState(state.eta + h * state.vel, state.vel + h * acc)
    minus = FlowMapState(state.eta - h * state.vel, state.vel - h * acc)
    return (navier_wall_residual(plus, params, bc, grid) - navier_wall_residual(minus, params, bc, grid)) / (2 * h)


def compat_residuals(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid,
                     order: int) -> np.ndarray:
    """Flat vector of the wall conditions required up to ``order`` (0 or 1)."""
    parts = []
    if bc.kind == "no_slip":
        parts.append(state.vel[..., 0])
        if order >= 1:
            parts.append(_wall_accel(state, params, grid))
    else:
        parts.append(state.vel[2, ..., 0])
        parts.append(navier_wall_residual(state, params, bc, grid))
        if order >= 1:
            parts.append(_robin_rate(state, params, bc, grid))
            parts.append(_wall_accel(state, params, grid)[2])
    return np.concatenate([np.ravel(p) for p in parts])


def _shapes(grid: Grid) -> dict[str, np.ndarray]:
    z = grid.z
    chi = cutoff(z / cutoff_width(grid))
    return {"lin": chi * z, "quad": 0.5 * chi * z**2}


def _unknowns(params: MaterialParams, bc: BoundaryCondition, order: int) -> list[tuple[str, int, str]]:
    """(field, component, profile) triples of the correction basis."""
    if bc.kind == "no_slip":
        return [("vel", i, "quad") for i in range(3)] if order >= 1 else []
    if params.eps == 0.0:
        unk = [("eta", b, "lin") for b in range(2)]
        if order >= 1:
            unk += [("vel", b, "lin") for b in range(2)]
        return unk
    unk = [("vel", b, "lin") for b in range(2)]
    if order >= 1:
        unk += [("vel", b, "quad") for b in range(2)] + [("vel", 2, "quad")]
    return unk


def compat_project(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid,
                   order: int = 1, newton_iter: int = 6) -> FlowMapState:
    """Blend initial data with wall-corrected profiles so that the compatibility conditions hold.

    Order 0 multiplies the wall-constrained velocity components by ``1 - chi``
    wherever their wall trace is nonzero and, for Navier slip, adds ``c chi(z/delta) z`` corrections so that the
    Robin relation holds. Order 1 additionally adds ``c chi z^2 / 2`` profiles
    chosen by Newton iteration (numerical Jacobian, one column per wall
    node and unknown) so that the wall trace of the time derivative of the
    conditions vanishes. ``delta = 8 dz``.
    """
    if order not in (0, 1):
        raise ValueError(f"compat order must be 0 or 1, got {order}")
    out = state.copy()
    chi = cutoff(grid.z / cutoff_width(grid))
    comps = slice(None) if bc.kind == "no_slip" else slice(2, 3)
    # only columns with a nonzero wall trace are blended; compatible data are fixed points
    dirty = out.vel[comps, ..., :1] != 0.0
    out.vel[comps] = np.where(dirty, out.vel[comps] * (1.0 - chi), out.vel[comps])
    top_closure(out, grid)

    unknowns = _unknowns(params, bc, order)
    if unknowns:
        shapes = _shapes(grid)
        nwall = grid.n_x * grid.n_y

        def perturbed(base, coef):
            st = base.copy()
            for u, (field, comp, prof) in enumerate(unknowns):
                c = coef[u * nwall:(u + 1) * nwall].reshape(grid.n_x, grid.n_y)
                getattr(st, field)[comp] += c[..., None] * shapes[prof]
            return st

        ncoef = len(unknowns) * nwall
        for _ in range(newton_iter):
            r0 = compat_residuals(out, params, bc, grid, order)
            if np.max(np.abs(r0)) < 1e-13:
                break
            jac = np.empty((r0.size, ncoef))
            for j in range(ncoef):
                e = np.zeros(ncoef)
                e[j] = 1.0
                jac[:, j] = compat_residuals(perturbed(out, e), params, bc, grid, order) - r0
            step, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
            out = perturbed(out, step)

    res0 = compat_residuals(out, params, bc, grid, 0)
    if np.max(np.abs(res0)) > 1e-10:
        raise ProjectionFailed(f"order-0 wall residual {np.max(np.abs(res0)):.3e} exceeds 1e-10")
    if order == 1:
        res1 = compat_residuals(out, params, bc, grid, 1)
        if np.max(np.abs(res1)) > 1e-6:
            raise ProjectionFailed(f"order-1 wall residual {np.max(np.abs(res1)):.3e} exceeds 1e-6")
    return out
