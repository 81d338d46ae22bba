"""Right-hand side of the Lagrangian momentum equation.

    rho0 dv_i/dt = -a_ik d_k q + 2 mu eps a_kl d_l (S_eta v)_ik
                   + lam eps a_ij d_j (div_eta v) + d_j (rho0 d_j eta_i)

Nested derivatives are taken field-then-derivative: ``S_eta v`` and
``div_eta v`` are formed as node fields and then differentiated with ``diff``.
The elastic term uses the compact conservative stencil ``div_rho_grad``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import FlowMapState, GeometricCache
from .grid import Grid, diff, div_rho_grad
from .material import MaterialParams, pressure


@dataclass
class RhsFields:
    accel: np.ndarray
    pressure_term: np.ndarray
    viscous_term: np.ndarray
    elastic_term: np.ndarray


def eta_gradient(vel: np.ndarray, cache: GeometricCache, grid: Grid) -> np.ndarray:
    """E[i, k] = d_{eta_k} v_i = A_kl d_l v_i."""
    E = np.zeros((3, 3) + grid.shape)
    for l in range(3):
        if grid.shape[l] == 1:
            continue
        dv = diff(vel, l, grid)
        E += dv[:, None] * cache.A[None, :, l]
    return E


def strain_rate(vel: np.ndarray, cache: GeometricCache, grid: Grid) -> np.ndarray:
    E = eta_gradient(vel, cache, grid)
    # bitwise symmetric: both entries are the same float sum
    return 0.5 * (E + E.swapaxes(0, 1))


def div_eta(vel: np.ndarray, cache: GeometricCache, grid: Grid) -> np.ndarray:
    E = eta_gradient(vel, cache, grid)
    return E[0, 0] + E[1, 1] + E[2, 2]


def pressure_term(cache: GeometricCache, params: MaterialParams, grid: Grid) -> np.ndarray:
    q = pressure(cache.J, params)
    out = np.zeros((3,) + grid.shape)
    for k in range(3):
        if grid.shape[k] == 1:
            continue
        out += cache.a[:, k] * diff(q, k, grid)
    return out


def viscous_term(vel: np.ndarray, cache: GeometricCache, params: MaterialParams, grid: Grid) -> np.ndarray:
    """2 mu eps a_kl d_l S_ik + lam eps a_ij d_j div_eta v (zero, and skipped, at eps = 0)."""
    out = np.zeros((3,) + grid.shape)
    if params.eps == 0.0:
        return out
    E = eta_gradient(vel, cache, grid)
    S = 0.5 * (E + E.swapaxes(0, 1))
    dv = E[0, 0] + E[1, 1] + E[2, 2]
    for l in range(3):
        if grid.shape[l] == 1:
            continue
        dS = diff(S, l, grid)  # (i, k, ...)
        out += 2.0 * params.mu * params.eps * np.einsum("k...,ik...->i...", cache.a[:, l], dS)
        if params.lam != 0.0:
            out += params.lam * params.eps * cache.a[:, l] * diff(dv, l, grid)
    return out


def elastic_term(eta: np.ndarray, params: MaterialParams, grid: Grid) -> np.ndarray:
    rho0 = params.rho0_field(grid)
    out = div_rho_grad(eta - grid.coords, rho0, grid)
    if np.ndim(params.rho0) > 0:
        # d_j(rho0 d_j X_i) = d_i rho0
        for i in range(3):
            out[i] += diff(rho0, i, grid)
    return out


def momentum_rhs(state: FlowMapState, cache: GeometricCache, params: MaterialParams, grid: Grid,
                 forcing: np.ndarray | None = None) -> RhsFields:
    """Acceleration field and its named parts.

    ``accel = (-pressure_term + viscous_term + elastic_term + forcing) / rho0``;
    the elastic part is zero in Navier-Stokes contrast mode.
    """
    p = pressure_term(cache, params, grid)
    v = viscous_term(state.vel, cache, params, grid)
    e = elastic_term(state.eta, params, grid) if params.elastic_on else np.zeros_like(p)
    total = -p + v + e
    if forcing is not None:
        total = total + forcing
    accel = total / params.rho0_field(grid)
    return RhsFields(accel=accel, pressure_term=p, viscous_term=v, elastic_term=e)


@lru_cache(maxsize=16)
def _diff_matrices(grid: Grid) -> tuple:
    """Sparse versions of ``diff`` on the C-flattened scalar field, one per axis (None if inactive)."""
    mats = []
    eyes = [sp.identity(n, format="csr") for n in grid.shape]
    for axis, n in enumerate(grid.shape):
        if n == 1:
            mats.append(None)
            continue
        h = grid.spacing(axis)
        if axis < 2:
            D = sp.diags([np.full(n - 1, 1.0), np.full(n - 1, -1.0)], [1, -1], shape=(n, n), format="lil")
            D[0, n - 1] = -1.0
            D[n - 1, 0] = 1.0
            D = D.tocsr() / (2.0 * h)
        else:
            D = sp.diags([np.full(n - 1, 1.0), np.full(n - 1, -1.0)], [1, -1], shape=(n, n), format="lil")
            D[0, :3] = [-3.0, 4.0, -1.0]
            D[n - 1, n - 3:] = [1.0, -4.0, 3.0]
            D = D.tocsr() / (2.0 * h)
        parts = [eyes[0], eyes[1], eyes[2]]
        parts[axis] = D
        mats.append(sp.kron(sp.kron(parts[0], parts[1]), parts[2], format="csr"))
    return tuple(mats)


def viscous_matrix(cache: GeometricCache, params: MaterialParams, grid: Grid) -> sp.csr_matrix:
    """Sparse ``(3N, 3N)`` matrix of ``viscous_term`` for fixed geometry (component-major ordering)."""
    N = grid.n_nodes
    D = _diff_matrices(grid)
    axes = grid.active_axes()
    me, le = params.mu * params.eps, params.lam * params.eps
    a = cache.a.reshape(3, 3, N)
    A = cache.A.reshape(3, 3, N)

    def term(coef_outer, l, coef_inner, m):
        # diag(coef_outer) D_l diag(coef_inner) D_m
        inner = D[m].multiply(coef_inner[:, None]).tocsr()
        return (D[l] @ inner).multiply(coef_outer[:, None]).tocsr()

    blocks = [[sp.csr_matrix((N, N)) for _ in range(3)] for _ in range(3)]
    L0 = sp.csr_matrix((N, N))
    for k in range(3):
        for l in axes:
            for m in axes:
                L0 = L0 + term(a[k, l], l, A[k, m], m)
    for i in range(3):
        blocks[i][i] = blocks[i][i] + me * L0
        for k in range(3):
            acc = sp.csr_matrix((N, N))
            for l in axes:
                for m in axes:
                    acc = acc + me * term(a[k, l], l, A[i, m], m)
                    if le != 0.0:
                        acc = acc + le * term(a[i, l], l, A[k, m], m)
            blocks[i][k] = blocks[i][k] + acc
    return sp.bmat(blocks, format="csr")
