"""Slab discretization of the half-space and the finite-difference stencils.

Fields live on nodes and carry the three spatial axes last:

* scalar field: ``(n_x, n_y, n_z)``
* vector field: ``(3, n_x, n_y, n_z)``
* tensor field: ``(3, 3, n_x, n_y, n_z)``

The tangential axes (x, y) are periodic with ``dx = L_x / n_x``. The normal
axis z is closed: node ``k = 0`` is the wall and ``k = n_z - 1`` is the
artificial top, ``dz = L_z / (n_z - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MODES = ("column1d", "slab2d", "slab3d")


@dataclass(frozen=True)
class Grid:
    mode: str
    n_x: int
    n_y: int
    n_z: int
    L_x: float
    L_y: float
    L_z: float
    tangential_periodic: bool = True

    @property
    def dx(self) -> float:
        return self.L_x / self.n_x

    @property
    def dy(self) -> float:
        return self.L_y / self.n_y

    @property
    def dz(self) -> float:
        return self.L_z / (self.n_z - 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_z)

    @property
    def n_nodes(self) -> int:
        return self.n_x * self.n_y * self.n_z

    def spacing(self, axis: int) -> float:
        return (self.dx, self.dy, self.dz)[axis]

    def active_axes(self) -> tuple[int, ...]:
        """Axes along which fields can vary (tangential axes with one node cannot)."""
        return tuple(ax for ax, n in enumerate(self.shape) if n > 1)

    @cached_property
    def coords(self) -> np.ndarray:
        """Reference coordinates ``X``, shape ``(3, n_x, n_y, n_z)``."""
        x = np.arange(self.n_x) * self.dx
        y = np.arange(self.n_y) * self.dy
        z = np.arange(self.n_z) * self.dz
        X = np.stack(np.meshgrid(x, y, z, indexing="ij"))
        X.setflags(write=False)
        return X

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.n_z) * self.dz

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Volume quadrature weights: trapezoid in z, uniform tangentially."""
        wz = np.full(self.n_z, self.dz)
        wz[0] = wz[-1] = 0.5 * self.dz
        w = np.broadcast_to(wz * self.dx * self.dy, self.shape).copy()
        w.setflags(write=False)
        return w


def make_grid(mode, n_x, n_y, n_z, L_x=1.0, L_y=1.0, L_z=1.0) -> Grid:
    if mode not in MODES:
        raise ValueError(f"grid.mode must be one of {MODES}, got {mode!r}")
    for name, n in (("n_x", n_x), ("n_y", n_y), ("n_z", n_z)):
        if int(n) != n or n < 1:
            raise ValueError(f"grid.{name} must be a positive integer, got {n!r}")
    for name, L in (("L_x", L_x), ("L_y", L_y), ("L_z", L_z)):
        if not L > 0:
            raise ValueError(f"grid.{name} must be > 0, got {L!r}")
    if n_z < 8:
        raise ValueError(f"grid.n_z must be >= 8, got {n_z}")
    if mode == "column1d" and (n_x != 1 or n_y != 1):
        raise ValueError("grid: column1d requires n_x = n_y = 1")
    if mode == "slab2d" and n_y != 1:
        raise ValueError("grid: slab2d requires n_y = 1")
    return Grid(mode, int(n_x), int(n_y), int(n_z), float(L_x), float(L_y), float(L_z))


def _axis(field: np.ndarray, axis: int) -> int:
    return field.ndim - 3 + axis


def diff(field: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Second-order first derivative along ``axis`` (0=x, 1=y, 2=z).

    Centered in the interior and periodic tangentially; second-order one-sided
    at the wall and the top. Exact on quadratics in z.
    """
    ax = _axis(field, axis)
    n = field.shape[ax]
    if axis < 2:
        if n == 1:
            return np.zeros_like(field)
        h = grid.spacing(axis)
        return (np.roll(field, -1, axis=ax) - np.roll(field, 1, axis=ax)) / (2.0 * h)
    h = grid.dz
    f = np.moveaxis(field, ax, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * h)
    out[..., 0] = (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * h)
    out[..., -1] = (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * h)
    return np.moveaxis(out, -1, ax)


def gradient(field: np.ndarray, grid: Grid) -> np.ndarray:
    """Stack ``diff`` over the three axes as a new axis right before the spatial ones."""
    return np.stack([diff(field, ax, grid) for ax in range(3)], axis=field.ndim - 3)


def div_rho_grad(field: np.ndarray, rho: np.ndarray, grid: Grid) -> np.ndarray:
    """Compact conservative ``sum_j d_j(rho d_j f)``.

    Three-point flux form with face values of ``rho`` averaged from nodes.
    Boundary rows use ``rho' f' + rho f''`` with one-sided stencils (f'' from
    the four-point formula). ``rho`` is a scalar field broadcast against
    leading component axes of ``field``.
    """
    out = np.zeros_like(field)
    for axis in range(2):
        ax = _axis(field, axis)
        if field.shape[ax] == 1:
            continue
        rax = rho.ndim - 3 + axis
        h2 = grid.spacing(axis) ** 2
        fp = np.roll(field, -1, axis=ax)
        fm = np.roll(field, 1, axis=ax)
        rp = 0.5 * (rho + np.roll(rho, -1, axis=rax))
        rm = 0.5 * (rho + np.roll(rho, 1, axis=rax))
        out += (rp * (fp - field) - rm * (field - fm)) / h2

    # z is always the last axis
    h = grid.dz
    f = field
    rz = np.broadcast_to(rho, field.shape)
    o = np.zeros_like(f)
    rp = 0.5 * (rz[..., 1:-1] + rz[..., 2:])
    rm = 0.5 * (rz[..., 1:-1] + rz[..., :-2])
    o[..., 1:-1] = (rp * (f[..., 2:] - f[..., 1:-1]) - rm * (f[..., 1:-1] - f[..., :-2])) / h**2
    for k, s in ((0, 1), (-1, -1)):
        i1, i2, i3 = k + s, k + 2 * s, k + 3 * s
        d1 = s * (-3.0 * f[..., k] + 4.0 * f[..., i1] - f[..., i2]) / (2.0 * h)
        r1 = s * (-3.0 * rz[..., k] + 4.0 * rz[..., i1] - rz[..., i2]) / (2.0 * h)
        d2 = (2.0 * f[..., k] - 5.0 * f[..., i1] + 4.0 * f[..., i2] - f[..., i3]) / h**2
        o[..., k] = r1 * d1 + rz[..., k] * d2
    return out + o


def second_diff(field: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Compact second derivative along one axis (one-sided four-point at z ends)."""
    ax = _axis(field, axis)
    if axis < 2:
        if field.shape[ax] == 1:
            return np.zeros_like(field)
        h2 = grid.spacing(axis) ** 2
        return (np.roll(field, -1, axis=ax) - 2.0 * field + np.roll(field, 1, axis=ax)) / h2
    h2 = grid.dz**2
    f = np.moveaxis(field, ax, -1)
    o = np.empty_like(f)
    o[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h2
    o[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / h2
    o[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / h2
    return np.moveaxis(o, -1, ax)


def integrate_volume(field: np.ndarray, grid: Grid) -> float:
    """Trapezoid in z, uniform weights tangentially.

    The weighted product is reduced with ``np.sum`` over the C-ordered array,
    a fixed pairwise order that does not depend on threading.
    """
    return float(np.sum(np.ascontiguousarray(field * grid.quad_weights)))


def integrate_boundary(field: np.ndarray, grid: Grid) -> float:
    """Integral over the wall plane z = 0 (uniform tangential weights)."""
    wall = np.ascontiguousarray(field[..., 0])
    return float(np.sum(wall) * grid.dx * grid.dy)
