"""Constitutive closure: reference density, gamma-law pressure and its potential."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateMap
from .geometry import J_FLOOR, FlowMapState, compute_geometry
from .grid import Grid


@dataclass(frozen=True)
class MaterialParams:
    """Parameters of the Lagrangian system.

    ``rho0`` is the reference density (Lagrangian mass density) either as a
    float or as a field sampled on the grid. ``lam`` is the bulk viscosity
    coefficient. With ``elastic_on=False`` the neo-Hookean stress is dropped,
    leaving compressible Navier-Stokes in Lagrangian form.
    """

    gamma: float = 1.4
    mu: float = 1.0
    lam: float = 0.0
    eps: float = 0.0
    rho0: float | np.ndarray = 1.0
    c0: float = 0.5
    C0: float = 2.0
    elastic_on: bool = True
    j_floor: float = J_FLOOR

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError(f"material.gamma must be > 1 (p = rho^gamma, gamma > 1), got {self.gamma}")
        if not self.mu > 0:
            raise ConfigError(f"material.mu must be > 0, got {self.mu}")
        if not 2 * self.mu + 3 * self.lam > 0:
            raise ConfigError(
                f"material.lambda violates 2*mu + 3*lambda > 0 (2*mu + 3*lambda = {2 * self.mu + 3 * self.lam})"
            )
        if not 0 <= self.eps <= 1:
            raise ConfigError(f"material.eps must lie in [0, 1], got {self.eps}")
        if not 0 < self.c0 <= self.C0:
            raise ConfigError("material.c0/C0 must satisfy 0 < c0 <= C0")
        r = np.asarray(self.rho0, dtype=float)
        if r.min() < self.c0 or r.max() > self.C0:
            raise ConfigError(
                f"material.rho0 must satisfy c0 <= rho0 <= C0 "
                f"(range [{r.min():.4g}, {r.max():.4g}] vs [{self.c0}, {self.C0}])"
            )

    def with_eps(self, eps: float) -> "MaterialParams":
        return replace(self, eps=eps)

    def rho0_field(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rho0, dtype=float), grid.shape)


def pressure(J: np.ndarray, params: MaterialParams) -> np.ndarray:
    """q = rho0^gamma J^-gamma."""
    if not float(np.min(J)) > params.j_floor:
        raise DegenerateMap(f"pressure: min J = {float(np.min(J)):.3e}")
    return np.asarray(params.rho0, dtype=float) ** params.gamma * J ** (-params.gamma)


def q_potential(f: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Q(f) = int_1^f q(s) s^-2 ds = (f^(gamma-1) - 1) / (gamma - 1)."""
    g = params.gamma
    return (np.asarray(f, dtype=float) ** (g - 1.0) - 1.0) / (g - 1.0)


def sound_speed(J: np.ndarray, params: MaterialParams) -> np.ndarray:
    """sqrt(gamma q / f) with f = rho0 / J."""
    f = np.asarray(params.rho0, dtype=float) / J
    return np.sqrt(params.gamma * pressure(J, params) / f)


def dJ_dq_consistency(state_prev: FlowMapState, state_next: FlowMapState, grid: Grid,
                      params: MaterialParams) -> float:
    """Residual of dJ/dt = -J^(gamma+1) / (gamma rho0^gamma) dq/dt with centered differences."""
    dt = state_next.t - state_prev.t
    J0 = compute_geometry(state_prev, grid, params.j_floor).J
    J1 = compute_geometry(state_next, grid, params.j_floor).J
    q0, q1 = pressure(J0, params), pressure(J1, params)
    Jm = 0.5 * (J0 + J1)
    g = params.gamma
    rho0 = np.asarray(params.rho0, dtype=float)
    lhs = (J1 - J0) / dt
    rhs = -(Jm ** (g + 1.0)) / (g * rho0**g) * (q1 - q0) / dt
    return float(np.max(np.abs(lhs - rhs)))
