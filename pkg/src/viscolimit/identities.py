"""Random smooth flow maps with analytic gradients, and the geometric identity suite.

A random map is ``eta = X + u`` with

    u_i = s * sum_m c_im sin(2 pi (p_m x / L_x + q_m y / L_y) + phi_m) * g_m(z)

periodic in x and y, ``g_m(z) = exp(-b_m z) cos(w_m z + psi_m)``, and the
amplitude ``s`` chosen so that ``|grad u| <= 0.25`` (hence ``J > 0``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import strain_rate
from .geometry import FlowMapState, cofactor, compute_geometry, det_by_row, piola_residual
from .grid import Grid, make_grid


@dataclass(frozen=True)
class SmoothMap:
    coef: np.ndarray  # (3, M)
    p: np.ndarray
    q: np.ndarray
    phi: np.ndarray
    b: np.ndarray
    w: np.ndarray
    psi: np.ndarray
    scale: float

    def _terms(self, X, grid: Grid):
        # tangential phase on an (n_x, n_y, 1) plane, normal profile on a (1, 1, n_z) line
        x, y, z = X[0][:, :1, :1], X[1][:1, :, :1], X[2][:1, :1, :]
        kx = 2 * np.pi * self.p / grid.L_x
        ky = 2 * np.pi * self.q / grid.L_y
        out = []
        for m in range(self.coef.shape[1]):
            th = kx[m] * x + ky[m] * y + self.phi[m]
            g = np.exp(-self.b[m] * z) * np.cos(self.w[m] * z + self.psi[m])
            dg = np.exp(-self.b[m] * z) * (-self.b[m] * np.cos(self.w[m] * z + self.psi[m])
                                           - self.w[m] * np.sin(self.w[m] * z + self.psi[m]))
            out.append((np.sin(th), np.cos(th), g, dg, kx[m], ky[m]))
        return out

    def displacement(self, grid: Grid) -> np.ndarray:
        u = np.zeros((3,) + grid.shape)
        for m, (s, _, g, _, _, _) in enumerate(self._terms(grid.coords, grid)):
            u += self.scale * self.coef[:, m, None, None, None] * (s * g)
        return u

    def gradient(self, grid: Grid) -> np.ndarray:
        """Exact ``grad eta`` on the grid nodes."""
        G = np.zeros((3, 3) + grid.shape)
        for m, (s, c, g, dg, kx, ky) in enumerate(self._terms(grid.coords, grid)):
            cm = self.scale * self.coef[:, m, None, None, None]
            G[:, 0] += cm * (kx * c * g)
            G[:, 1] += cm * (ky * c * g)
            G[:, 2] += cm * (s * dg)
        for i in range(3):
            G[i, i] += 1.0
        return G


def random_map(rng: np.random.Generator, n_modes: int = 3, max_grad: float = 0.25,
               L_x: float = 0.5, L_y: float = 0.5) -> SmoothMap:
    coef = rng.uniform(-1.0, 1.0, size=(3, n_modes))
    # both tangential wavenumbers nonzero: maps independent of x or y satisfy
    # the discrete Piola identity exactly and carry no convergence information
    p = np.ones(n_modes)
    q = rng.choice([-1.0, 1.0], size=n_modes)
    q[:2] = (1.0, -1.0)  # two distinct directions, otherwise the map is 2D in rotated coordinates
    phi = rng.uniform(0, 2 * np.pi, n_modes)
    b = rng.uniform(0.25, 1.5, n_modes)
    w = rng.uniform(0.5, 2.5, n_modes)
    psi = rng.uniform(0, 2 * np.pi, n_modes)
    # crude bound on |grad u| per unit scale
    k = 2 * np.pi * np.maximum(np.abs(p) / L_x, np.abs(q) / L_y) + b + w
    bound = float(np.sum(np.abs(coef).max(axis=0) * k)) * np.sqrt(3.0)
    return SmoothMap(coef, p, q, phi, b, w, psi, max_grad / bound)


def slab_for(n_z: int) -> Grid:
    """slab3d grid with dx = dy = dz over a (1/2, 1/2, 1) box."""
    n_t = (n_z - 1) // 2
    return make_grid("slab3d", n_t, n_t, n_z, L_x=0.5, L_y=0.5, L_z=1.0)


def _lu_adjugate_t(mats: np.ndarray) -> np.ndarray:
    """``J (G)^-T`` for a ``(3, 3, ...)`` field through LAPACK LU (det and inverse)."""
    flat = np.ascontiguousarray(np.moveaxis(mats.reshape(3, 3, -1), -1, 0))
    out = np.linalg.det(flat)[:, None, None] * np.transpose(np.linalg.inv(flat), (0, 2, 1))
    return np.moveaxis(out, 0, -1).reshape(mats.shape)


def map_errors(smap: SmoothMap, grid: Grid, algebraic: bool = True) -> dict:
    """Piola residual and discrete-vs-continuum cofactor discrepancy.

    With ``algebraic`` the resolution-independent checks are added: cofactor
    formula against LU on the discrete gradient, row expansions of J, and
    the analytic cofactor against LU on the exact gradient.
    """
    state = FlowMapState(grid.coords + smap.displacement(grid), np.zeros((3,) + grid.shape))
    cache = compute_geometry(state, grid)
    G_exact = smap.gradient(grid)
    a_cont = _lu_adjugate_t(G_exact)
    out = {
        "piola": piola_residual(cache, grid),
        "a_vs_continuum": float(np.max(np.abs(cache.a - a_cont))),
        "min_J": float(cache.J.min()),
    }
    if algebraic:
        out["cofactor_vs_lu"] = float(np.max(np.abs(cache.a - _lu_adjugate_t(cache.grad_eta))))
        out["det_rows"] = float(max(np.max(np.abs(det_by_row(cache.grad_eta, cache.a, r) - cache.J))
                                    for r in (1, 2)))
        out["a_exact_vs_lu"] = float(np.max(np.abs(cofactor(G_exact) - a_cont)))
    return out


def observed_rates(values) -> list[float]:
    return [float(np.log2(values[i] / values[i + 1])) for i in range(len(values) - 1)]


def identity_suite(seed: int = 0, n_maps: int = 100, n_z_list=(33, 65, 129)) -> dict:
    """Run the geometry identity checks on ``n_maps`` random maps; returns per-check worst values."""
    rng = np.random.default_rng(seed)
    grids = [slab_for(n) for n in n_z_list]
    piola_rates, a_rates, lu_err, det_err, minJ = [], [], 0.0, 0.0, np.inf
    sym_err = 0.0
    for _ in range(n_maps):
        smap = random_map(rng)
        # the algebraic checks do not depend on resolution; run them on the coarsest grid
        errs = [map_errors(smap, g, algebraic=(j == 0)) for j, g in enumerate(grids)]
        piola_rates += observed_rates([e["piola"] for e in errs])
        a_rates += observed_rates([e["a_vs_continuum"] for e in errs])
        lu_err = max(lu_err, errs[0]["cofactor_vs_lu"], errs[0]["a_exact_vs_lu"])
        det_err = max(det_err, errs[0]["det_rows"])
        minJ = min(minJ, min(e["min_J"] for e in errs))
    g = grids[0]
    vel = rng.standard_normal((3,) + g.shape)
    st = FlowMapState(g.coords + random_map(rng).displacement(g), vel)
    S = strain_rate(vel, compute_geometry(st, g), g)
    sym_err = float(np.max(np.abs(S - S.swapaxes(0, 1))))
    return {
        "piola_rate_min": min(piola_rates), "piola_rate_max": max(piola_rates),
        "a_rate_min": min(a_rates), "a_rate_max": max(a_rates),
        "cofactor_vs_lu": lu_err, "det_expansion": det_err, "min_J": minJ, "strain_symmetry": sym_err,
    }
