"""Measurements on states and trajectories.

All energies are taken relative to the rest state ``eta = X``, ``v = 0``,
``q = rho0^gamma``. With ``u = eta - X`` the basic energy is

    E = 1/2 int rho0 (|v|^2 + |grad u|^2) + int rho0 div u + int rho0 (Q(f) - Q(rho0))

which is the raw ``1/2 int rho0 (|v|^2 + |grad eta|^2 + 2 Q(f))`` minus its
(infinite) rest value. The ``div u`` term vanishes for constant ``rho0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations_with_replacement

import numpy as np

from .boundary import BoundaryCondition
from .dynamics import momentum_rhs, strain_rate
from .errors import InsufficientHistory, SingularRecovery
from .geometry import FlowMapState, GeometricCache, compute_geometry, wall_structure_residual
from .grid import Grid, diff, integrate_boundary, integrate_volume, second_diff
from .material import MaterialParams, pressure, q_potential


# --- basic energy law ---------------------------------------------------------

def _displacement_gradient(state: FlowMapState, grid: Grid) -> np.ndarray:
    disp = state.eta - grid.coords
    return np.stack([diff(disp, j, grid) for j in range(3)], axis=1)


def basic_energy(state: FlowMapState, params: MaterialParams, grid: Grid) -> float:
    rho0 = params.rho0_field(grid)
    Gu = _displacement_gradient(state, grid)
    cache = compute_geometry(state, grid, params.j_floor)
    f = rho0 / cache.J
    dens = 0.5 * rho0 * (np.sum(state.vel**2, axis=0) + np.sum(Gu**2, axis=(0, 1)))
    dens = dens + rho0 * (Gu[0, 0] + Gu[1, 1] + Gu[2, 2])
    dens = dens + rho0 * (q_potential(f, params) - q_potential(rho0, params))
    return integrate_volume(dens, grid)


def dissipation_rate(state: FlowMapState, params: MaterialParams, grid: Grid) -> float:
    """2 mu eps int J |S_eta v|^2 + lam eps int J |div_eta v|^2."""
    if params.eps == 0.0:
        return 0.0
    cache = compute_geometry(state, grid, params.j_floor)
    S = strain_rate(state.vel, cache, grid)
    div = S[0, 0] + S[1, 1] + S[2, 2]
    dens = 2.0 * params.mu * params.eps * cache.J * np.sum(S**2, axis=(0, 1))
    dens = dens + params.lam * params.eps * cache.J * div**2
    return integrate_volume(dens, grid)


def boundary_work_rate(state: FlowMapState, params: MaterialParams, bc: BoundaryCondition, grid: Grid) -> float:
    """alpha eps int_wall |a33| |v|^2; exactly zero under no-slip."""
    if bc.kind == "no_slip" or params.eps == 0.0 or bc.alpha == 0.0:
        return 0.0
    cache = compute_geometry(state, grid, params.j_floor)
    a33 = cache.a[2, 2]
    dens = bc.alpha * params.eps * np.abs(a33) * np.sum(state.vel**2, axis=0)
    return integrate_boundary(dens, grid)


@dataclass
class EnergyBalance:
    t: np.ndarray
    E: np.ndarray
    D: np.ndarray
    B: np.ndarray
    residual: np.ndarray


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def basic_energy_balance(energy_log: np.ndarray) -> EnergyBalance:
    """Cumulative dissipation ``D``, boundary work ``B`` and ``|E - E(0) + D - B|``.

    ``energy_log`` rows are ``(t, E, dissipation rate, boundary work rate)``
    at every accepted step; time integrals use the trapezoid rule.
    """
    log = np.asarray(energy_log, dtype=float).reshape(-1, 4)
    t, E = log[:, 0], log[:, 1]
    D = _cumtrapz(log[:, 2], t)
    B = _cumtrapz(log[:, 3], t)
    res = np.abs(E - E[:1] + D - B) if E.size else E
    return EnergyBalance(t=t, E=E, D=D, B=B, residual=res)


# --- truncated energy functional ------------------------------------------------

def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights at 0 for the given integer offsets (unit spacing)."""
    x = np.asarray(offsets, dtype=float)
    V = np.vander(x, increasing=True).T
    rhs = np.zeros(x.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def time_derivative(series: list[np.ndarray], times: np.ndarray, n: int, order: int) -> np.ndarray:
    """Second-order backward difference of ``series`` at index ``n``.

    Uses ``order + 2`` points ending at ``n``; near the start the stencil is
    shifted forward by the minimum amount.
    """
    if order == 0:
        return series[n]
    npts = order + 2
    if len(series) < npts:
        raise InsufficientHistory(f"need {npts} snapshots for a time derivative of order {order}, have {len(series)}")
    h = np.diff(times)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ValueError("time derivatives need uniformly spaced snapshots")
    start = min(max(n - npts + 1, 0), len(series) - npts)
    idx = list(range(start, start + npts))
    w = fd_weights([i - n for i in idx], order) / h[0] ** order
    return sum(wi * series[i] for wi, i in zip(w, idx))


def _deriv_tree(field: np.ndarray, grid: Grid, k: int, axes) -> list[np.ndarray]:
    """All derivatives of total order exactly ``k`` over ``axes`` (as multisets)."""
    if k == 0:
        return [field]
    out = []
    for combo in combinations_with_replacement(axes, k):
        f = field
        for ax in combo:
            f = diff(f, ax, grid)
        out.append(f)
    return out


def sobolev_sq(field: np.ndarray, grid: Grid, k: int) -> float:
    """Discrete ``||f||_k^2``: sum of squared L2 norms of derivatives of order <= k."""
    total = 0.0
    for order in range(k + 1):
        for d in _deriv_tree(field, grid, order, grid.active_axes()):
            total += integrate_volume(np.sum(d**2, axis=tuple(range(d.ndim - 3))) if d.ndim > 3 else d**2, grid)
    return total


def tangential_sq(field: np.ndarray, grid: Grid, k: int) -> float:
    """``||d_tau^k f||_0^2`` summed over tangential multi-indices of order exactly k."""
    axes = [ax for ax in grid.active_axes() if ax < 2]
    if k > 0 and not axes:
        return 0.0
    total = 0.0
    for d in _deriv_tree(field, grid, k, axes):
        total += integrate_volume(np.sum(d**2, axis=tuple(range(d.ndim - 3))) if d.ndim > 3 else d**2, grid)
    return total


def _grad(field: np.ndarray, grid: Grid) -> np.ndarray:
    return np.stack([diff(field, j, grid) for j in range(3)], axis=0)


def energy_functional(snapshots: list[FlowMapState], params: MaterialParams, grid: Grid,
                      m_impl: int = 2) -> np.ndarray:
    """Truncated energy functional at every snapshot time.

    With ``m = m_impl``, ``u = eta - X`` and ``qh = q - rho0^gamma``::

        sum_{j<=m} ||dt^j u||_{m-j}^2 + ||dt^j dtau^{m-j} (grad u, v, qh)||_0^2
        + sum_{j<=m-1} eps ||dt^j grad^2 u||_{m-1-j}^2
        + int_0^t sum_{j<=m} ||dt^j (grad u, v, eps grad v)||_{m-j}^2 + eps ||dt^j dtau^{m-j} grad v||_0^2

    Spatial derivatives use ``diff``; time derivatives are second-order
    backward differences over the (uniformly spaced) snapshots; the time
    integral is the trapezoid rule over snapshot times. ``m_impl = 0`` is
    accepted as the derivative-free variant.
    """
    m = int(m_impl)
    if m not in (0, 1, 2):
        raise ValueError(f"m_impl must be 0, 1 or 2, got {m_impl}")
    if len(snapshots) < (m + 2 if m > 0 else 1):
        raise InsufficientHistory(f"m_impl = {m} needs at least {m + 2} snapshots, have {len(snapshots)}")
    times = np.array([s.t for s in snapshots])
    eps = params.eps
    q_rest = np.asarray(params.rho0, dtype=float) ** params.gamma
    U = [s.eta - grid.coords for s in snapshots]
    V = [s.vel for s in snapshots]
    Q = [pressure(compute_geometry(s, grid, params.j_floor).J, params) - q_rest for s in snapshots]

    inst = np.zeros(len(snapshots))
    integrand = np.zeros(len(snapshots))
    for n in range(len(snapshots)):
        for j in range(m + 1):
            u_j = time_derivative(U, times, n, j)
            v_j = time_derivative(V, times, n, j)
            q_j = time_derivative(Q, times, n, j)
            gu_j = _grad(u_j, grid)
            gv_j = _grad(v_j, grid)
            inst[n] += sobolev_sq(u_j, grid, m - j)
            inst[n] += tangential_sq(gu_j, grid, m - j) + tangential_sq(v_j, grid, m - j)
            inst[n] += tangential_sq(q_j, grid, m - j)
            if j <= m - 1:
                hess = np.stack([diff(gu_j, l, grid) for l in range(3)], axis=0)
                inst[n] += eps * sobolev_sq(hess, grid, m - 1 - j)
            integrand[n] += sobolev_sq(gu_j, grid, m - j) + sobolev_sq(v_j, grid, m - j)
            integrand[n] += eps**2 * sobolev_sq(gv_j, grid, m - j)
            integrand[n] += eps * tangential_sq(gv_j, grid, m - j)
    return inst + _cumtrapz(integrand, times)


# --- the A matrix and normal recovery ------------------------------------------

def assemble_A(cache: GeometricCache, params: MaterialParams) -> np.ndarray:
    """``A_ij = rho0 J delta_ij + gamma (rho0 / J)^gamma a_i3 a_j3`` per node, shape ``(3, 3, ...)``."""
    rho0 = np.asarray(params.rho0, dtype=float)
    base = rho0 * cache.J
    coef = params.gamma * (rho0 / cache.J) ** params.gamma
    n = cache.a[:, 2]
    out = coef * (n[:, None] * n[None, :])  # n_i n_j first keeps A bitwise symmetric
    for i in range(3):
        out[i, i] = out[i, i] + base
    return out


def A_spectrum_margin(A_field: np.ndarray, rho0J: np.ndarray) -> float:
    """min over nodes of ``lambda_min(A) - rho0 J``."""
    mats = np.moveaxis(A_field.reshape(3, 3, -1), -1, 0)
    lam = np.linalg.eigvalsh(mats)[:, 0]
    return float(np.min(lam - np.ravel(np.broadcast_to(rho0J, A_field.shape[2:]))))


def _second(field: np.ndarray, l: int, j: int, grid: Grid) -> np.ndarray:
    if l == j:
        return second_diff(field, l, grid)
    return diff(diff(field, j, grid), l, grid)


def normal_recovery(state: FlowMapState, cache: GeometricCache, params: MaterialParams,
                    grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Recovered and directly differenced ``d_3^2 eta``, both ``(3, nx, ny, nz)``.

    The recovered value solves, node by node,

        -Acal d3^2 eta = F + G + mu eps |a_.3|^2 d3^2 v + (mu + lam) eps a_.3 (a_.3 . d3^2 v)

    where ``F`` collects the eps-weighted terms with at most one normal
    derivative and ``G`` the pressure, elastic, inertial and density-gradient
    terms; ``d_t v`` is the acceleration of ``momentum_rhs``.
    """
    mu, lam, eps, g = params.mu, params.lam, params.eps, params.gamma
    rho0 = params.rho0_field(grid)
    J, a, A = cache.J, cache.a, cache.A
    axes = grid.active_axes()
    eta, vel = state.eta, state.vel
    disp = eta - grid.coords

    F = np.zeros((3,) + grid.shape)
    if eps != 0.0:
        for l in axes:
            for j in axes:
                if l == 2 and j == 2:
                    continue
                d2v = _second(vel, l, j, grid)  # d_l d_j v_i
                F += mu * eps * np.sum(a[:, l] * a[:, j], axis=0) * d2v
                F += (mu + lam) * eps * a[:, j] * np.sum(a[:, l] * d2v, axis=0)
        dA = {l: diff(A, l, grid) for l in axes}
        dv = {j: diff(vel, j, grid) for j in axes}
        for l in axes:
            for j in axes:
                # mu eps J a_kl d_l A_kj d_j v_i
                F += mu * eps * J * np.sum(a[:, l] * dA[l][:, j], axis=0) * dv[j]
                # mu eps J a_kl d_l A_ij d_j v_k
                F += mu * eps * J * dA[l][:, j] * np.sum(a[:, l] * dv[j], axis=0)
                # lam eps J a_ij d_j A_kl d_l v_k
                F += lam * eps * J * a[:, j] * np.sum(dA[j][:, l] * dv[l], axis=0)

    coef = g * (rho0 / J) ** g
    G = np.zeros((3,) + grid.shape)
    for l in axes:
        for j in axes:
            if l == 2 and j == 2:
                continue
            d2eta = _second(disp, l, j, grid)
            G += coef * a[:, l] * np.sum(a[:, j] * d2eta, axis=0)
    accel = momentum_rhs(state, cache, params, grid).accel
    G -= rho0 * J * accel
    for ax in axes:
        if ax < 2:
            G -= rho0 * J * second_diff(disp, ax, grid)
    if np.ndim(params.rho0) > 0:
        drho = [diff(rho0, k, grid) for k in range(3)]
        G -= g * rho0 ** (g - 1.0) * J ** (1.0 - g) * sum(a[:, k] * drho[k] for k in range(3))
        for k in range(3):
            G += J * drho[k] * (diff(disp, k, grid) + np.eye(3)[:, k, None, None, None])

    d3v = second_diff(vel, 2, grid)
    n = a[:, 2]
    rhs = F + G + mu * eps * np.sum(n * n, axis=0) * d3v + (mu + lam) * eps * n * np.sum(n * d3v, axis=0)
    Acal = assemble_A(cache, params)
    mats = np.moveaxis(Acal.reshape(3, 3, -1), -1, 0)
    lam_eig = np.linalg.eigvalsh(mats)
    cond = float(np.max(lam_eig[:, -1] / lam_eig[:, 0]))
    if not cond < 1e12:
        raise SingularRecovery(f"A condition number {cond:.3e} exceeds 1e12")
    b = -np.moveaxis(rhs.reshape(3, -1), -1, 0)
    recovered = np.linalg.solve(mats, b[..., None])[..., 0]
    recovered = np.moveaxis(recovered, 0, -1).reshape((3,) + grid.shape)
    direct = second_diff(disp, 2, grid)
    return recovered, direct


def normal_recovery_residual(state: FlowMapState, cache: GeometricCache, params: MaterialParams,
                             grid: Grid) -> float:
    """Max-norm discrepancy between recovered and direct ``d_3^2 eta``.

    Two nodes are dropped at each z end: there the momentum operator nests a
    one-sided first difference inside a centred one and is only first order,
    so the two sides of the identity agree to O(h) rather than O(h^2).
    """
    rec, direct = normal_recovery(state, cache, params, grid)
    return float(np.max(np.abs(rec - direct)[..., 2:-2]))


# --- boundary layer and Korn probes ----------------------------------------------

def boundary_layer_indicator(state: FlowMapState, grid: Grid, z_frac: float = 0.1) -> float:
    """max over z <= z_frac L_z of |d_z (v_1, v_2)|."""
    mask = grid.z <= z_frac * grid.L_z + 1e-12 * grid.L_z
    dz_v = diff(state.vel[:2], 2, grid)[..., mask]
    return float(np.max(np.sqrt(np.sum(dz_v**2, axis=0))))


def korn_ratio(f: np.ndarray, cache: GeometricCache, grid: Grid) -> float:
    """``||grad f||^2 / (||S_eta f - div_eta f I / 3||^2 + ||f||^2)``; 0 if the denominator vanishes."""
    grad = np.stack([diff(f, l, grid) for l in range(3)], axis=1)
    S = strain_rate(f, cache, grid)
    div = S[0, 0] + S[1, 1] + S[2, 2]
    dev = S - np.eye(3)[:, :, None, None, None] * div / 3.0
    num = integrate_volume(np.sum(grad**2, axis=(0, 1)), grid)
    den = integrate_volume(np.sum(dev**2, axis=(0, 1)), grid) + integrate_volume(np.sum(f**2, axis=0), grid)
    if den < 1e-30:
        return 0.0
    return num / den


# --- reports ---------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    t: float
    basic_energy: float
    dissipation_cum: float
    boundary_work_cum: float
    balance_residual: float
    energy_functional: float
    min_J: float
    max_J: float
    A_min_eig_margin: float
    normal_recovery_residual: float
    bl_indicator: float
    korn_ratio: float
    wall_structure_residual: float

    def as_dict(self) -> dict:
        return asdict(self)


REPORT_COLUMNS = tuple(DiagnosticsReport.__dataclass_fields__)


def build_reports(snapshots: list[FlowMapState], energy_log: np.ndarray, params: MaterialParams,
                  bc: BoundaryCondition, grid: Grid, m_impl: int = 2) -> list[DiagnosticsReport]:
    """One report per snapshot.

    The energy functional uses the largest order ``<= m_impl`` that the
    number of snapshots supports; with unevenly spaced snapshots (adaptive
    steps) it falls back to the derivative-free order 0.
    """
    bal = basic_energy_balance(energy_log) if len(energy_log) else None
    m_use = max(0, min(m_impl, len(snapshots) - 2))
    h = np.diff([s.t for s in snapshots])
    if h.size and not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        m_use = 0
    efun = energy_functional(snapshots, params, grid, m_use)
    reports = []
    for n, s in enumerate(snapshots):
        cache = compute_geometry(s, grid, params.j_floor)
        if bal is not None:
            k = int(np.argmin(np.abs(bal.t - s.t)))
            E, D, B, res = bal.E[k], bal.D[k], bal.B[k], bal.residual[k]
        else:
            E, D, B, res = basic_energy(s, params, grid), 0.0, 0.0, 0.0
        rho0J = params.rho0_field(grid) * cache.J
        reports.append(DiagnosticsReport(
            t=s.t,
            basic_energy=float(E),
            dissipation_cum=float(D),
            boundary_work_cum=float(B),
            balance_residual=float(res),
            energy_functional=float(efun[n]),
            min_J=float(cache.J.min()),
            max_J=float(cache.J.max()),
            A_min_eig_margin=A_spectrum_margin(assemble_A(cache, params), rho0J),
            normal_recovery_residual=normal_recovery_residual(s, cache, params, grid),
            bl_indicator=boundary_layer_indicator(s, grid),
            korn_ratio=korn_ratio(s.vel, cache, grid),
            wall_structure_residual=wall_structure_residual(cache),
        ))
    return reports
