"""Flow-map state and cofactor algebra of the deformation gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMap
from .grid import Grid, diff

J_FLOOR = 1e-6


@dataclass
class FlowMapState:
    """Positions ``eta`` and velocities ``vel`` (both ``(3, nx, ny, nz)``) at time ``t``."""

    eta: np.ndarray
    vel: np.ndarray
    t: float = 0.0

    def copy(self) -> "FlowMapState":
        return FlowMapState(self.eta.copy(), self.vel.copy(), self.t)

    @classmethod
    def rest(cls, grid: Grid) -> "FlowMapState":
        return cls(np.array(grid.coords, dtype=float), np.zeros((3,) + grid.shape))


@dataclass
class GeometricCache:
    grad_eta: np.ndarray  # (3, 3, ...) with grad_eta[i, j] = d_j eta_i
    J: np.ndarray
    A: np.ndarray  # (grad eta)^{-T}
    a: np.ndarray  # cofactor matrix J A

    @property
    def n_col(self) -> np.ndarray:
        """Third column ``a[:, 2]``; the (unnormalized) wall normal in the deformed frame."""
        return self.a[:, 2]


def grad_eta(eta: np.ndarray, grid: Grid) -> np.ndarray:
    # differentiate the periodic displacement, add the identity back
    disp = eta - grid.coords
    G = np.empty((3, 3) + grid.shape)
    for j in range(3):
        G[:, j] = diff(disp, j, grid)
    for i in range(3):
        G[i, i] += 1.0
    return G


def cofactor(G: np.ndarray) -> np.ndarray:
    """Cofactor matrix of a field of 3x3 matrices, written out entry by entry."""
    a = np.empty_like(G)
    a[0, 0] = G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1]
    a[0, 1] = G[1, 2] * G[2, 0] - G[1, 0] * G[2, 2]
    a[0, 2] = G[1, 0] * G[2, 1] - G[1, 1] * G[2, 0]
    a[1, 0] = G[0, 2] * G[2, 1] - G[0, 1] * G[2, 2]
    a[1, 1] = G[0, 0] * G[2, 2] - G[0, 2] * G[2, 0]
    a[1, 2] = G[0, 1] * G[2, 0] - G[0, 0] * G[2, 1]
    a[2, 0] = G[0, 1] * G[1, 2] - G[0, 2] * G[1, 1]
    a[2, 1] = G[0, 2] * G[1, 0] - G[0, 0] * G[1, 2]
    a[2, 2] = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    return a


def det_by_row(G: np.ndarray, a: np.ndarray, row: int = 0) -> np.ndarray:
    """Determinant by cofactor expansion along ``row``."""
    return G[row, 0] * a[row, 0] + G[row, 1] * a[row, 1] + G[row, 2] * a[row, 2]


def geometry_from_gradient(G: np.ndarray, j_floor: float = J_FLOOR) -> GeometricCache:
    a = cofactor(G)
    J = det_by_row(G, a, 0)
    jmin = float(J.min())
    if not jmin > j_floor:
        raise DegenerateMap(f"min J = {jmin:.3e} <= floor {j_floor:.1e}")
    return GeometricCache(grad_eta=G, J=J, A=a / J, a=a)


def compute_geometry(state: FlowMapState, grid: Grid, j_floor: float = J_FLOOR) -> GeometricCache:
    return geometry_from_gradient(grad_eta(state.eta, grid), j_floor)


def piola_residual(cache: GeometricCache, grid: Grid) -> float:
    """max over k and nodes of |sum_l d_l a_kl| with the discrete ``diff``."""
    res = sum(diff(cache.a[:, l], l, grid) for l in range(3))
    return float(np.max(np.abs(res)))


def div_eta_field(vel: np.ndarray, cache: GeometricCache, grid: Grid) -> np.ndarray:
    """``A_kl d_l v_k``."""
    out = np.zeros(grid.shape)
    for l in range(3):
        dv = diff(vel, l, grid)
        out += np.einsum("k...,k...->...", cache.A[:, l], dv)
    return out


def jacobi_residual(state_prev: FlowMapState, state_next: FlowMapState, grid: Grid) -> float:
    """Centered-in-time check of dJ/dt = J A_kj d_j v_k at the midpoint state.

    The midpoint state is the average of the two snapshots; the residual is
    O(dt^2).
    """
    dt = state_next.t - state_prev.t
    J0 = compute_geometry(state_prev, grid).J
    J1 = compute_geometry(state_next, grid).J
    mid = FlowMapState(0.5 * (state_prev.eta + state_next.eta), 0.5 * (state_prev.vel + state_next.vel))
    cm = compute_geometry(mid, grid)
    rhs = cm.J * div_eta_field(mid.vel, cm, grid)
    return float(np.max(np.abs((J1 - J0) / dt - rhs)))


def wall_structure_residual(cache: GeometricCache) -> float:
    """max over the wall of |a_13| + |a_23|."""
    return float(np.max(np.abs(cache.a[0, 2, ..., 0]) + np.abs(cache.a[1, 2, ..., 0])))
