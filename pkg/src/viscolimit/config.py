"""Run configuration: TOML parsing, validation and the named initial-data presets.

Example::

    [grid]
    mode = "column1d"
    n_z = 257

    [material]
    eps = 1e-2

    [bc]
    kind = "no_slip"

    [initial]
    preset = "standard"

Every section is optional; omitted keys take the defaults below. Unknown keys
are rejected.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .boundary import BoundaryCondition, compat_project, cutoff
from .errors import ConfigError
from .geometry import FlowMapState
from .grid import Grid, make_grid
from .integrate import IntegratorConfig
from .material import MaterialParams

PRESETS = ("standard", "compressive", "layer", "zero", "custom")


@dataclass(frozen=True)
class GridSection:
    mode: str = "column1d"
    n_x: int = 1
    n_y: int = 1
    n_z: int = 257
    L_x: float = 1.0
    L_y: float = 1.0
    L_z: float = 1.0


@dataclass(frozen=True)
class MaterialSection:
    gamma: float = 1.4
    mu: float = 1.0
    # "lambda" in the TOML file
    lam: float = 0.0
    eps: float = 0.0
    rho0: float | str = 1.0
    c0: float = 0.5
    C0: float = 2.0
    elastic_on: bool = True


@dataclass(frozen=True)
class BcSection:
    kind: str = "no_slip"
    alpha: float = 1.0


@dataclass(frozen=True)
class IntegratorSection:
    scheme: str = "rk4_explicit"
    cfl_adv: float = 0.4
    cfl_visc: float = 0.25
    t_final: float = 0.5
    max_steps: int = 1_000_000
    snapshot_every: int = 10
    dt: float | None = None


@dataclass(frozen=True)
class InitialSection:
    preset: str = "standard"
    phi1: str = "0"
    phi2: str = "0"
    phi3: str = "0"
    v1: str = "0"
    v2: str = "0"
    v3: str = "0"
    compat_order: int = 1


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    snapshot_cadence: int = 1
    diag_cadence: int = 1


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    bc: BcSection = field(default_factory=BcSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    initial: InitialSection = field(default_factory=InitialSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived objects --
    def make_grid(self) -> Grid:
        g = self.grid
        try:
            return make_grid(g.mode, g.n_x, g.n_y, g.n_z, g.L_x, g.L_y, g.L_z)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def make_params(self, grid: Grid | None = None) -> MaterialParams:
        m = self.material
        rho0 = m.rho0
        if isinstance(rho0, str):
            grid = grid or self.make_grid()
            rho0 = np.array(np.broadcast_to(evaluate(rho0, grid, "material.rho0"), grid.shape), dtype=float)
        return MaterialParams(gamma=m.gamma, mu=m.mu, lam=m.lam, eps=m.eps, rho0=rho0, c0=m.c0, C0=m.C0,
                              elastic_on=m.elastic_on)

    def make_bc(self) -> BoundaryCondition:
        return BoundaryCondition(self.bc.kind, self.bc.alpha)

    def make_integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**asdict(self.integrator))

    def with_eps(self, eps: float) -> "RunConfig":
        return replace(self, material=replace(self.material, eps=float(eps)))

    def with_overrides(self, **sections) -> "RunConfig":
        """``cfg.with_overrides(bc={"kind": "navier_slip"})`` style updates."""
        out = self
        for name, kv in sections.items():
            out = replace(out, **{name: replace(getattr(out, name), **kv)})
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["material"]["lambda"] = d["material"].pop("lam")
        return d

    def hash(self) -> str:
        """sha256 of the canonical JSON form (output settings excluded)."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_SECTIONS = {
    "grid": GridSection,
    "material": MaterialSection,
    "bc": BcSection,
    "integrator": IntegratorSection,
    "initial": InitialSection,
    "output": OutputSection,
}
_INT_KEYS = {"n_x", "n_y", "n_z", "max_steps", "snapshot_every", "compat_order", "snapshot_cadence", "diag_cadence"}


def _coerce(section: str, key: str, value, default):
    path = f"{section}.{key if key != 'lam' else 'lambda'}"
    if value is None and default is None:  # only reachable from dicts (manifests); TOML has no null
        return None
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be a boolean, got {value!r}")
        return value
    if key == "rho0":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            return value
        raise ConfigError(f"{path} must be a number or an expression string")
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def config_from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for section, value in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] (allowed: {', '.join(_SECTIONS)})")
        if not isinstance(value, dict):
            raise ConfigError(f"[{section}] must be a table")
        cls = _SECTIONS[section]
        defaults = {f.name: f.default for f in fields(cls)}
        entries = {}
        for key, v in value.items():
            name = "lam" if (section, key) == ("material", "lambda") else key
            if name not in defaults or (section, key) == ("material", "lam"):
                raise ConfigError(f"unknown key {section}.{key}")
            entries[name] = _coerce(section, name, v, defaults[name])
        kwargs[section] = cls(**entries)
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text; syntax errors report the line number."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from None
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: config must be UTF-8 text") from None
    return parse_config(text)


def validate(cfg: RunConfig) -> None:
    """Check every constraint before anything is allocated; messages name the key."""
    m = cfg.material
    if not m.gamma > 1:
        raise ConfigError(f"material.gamma must be > 1 (pressure law p = A rho^gamma, gamma > 1), got {m.gamma}")
    if not m.mu > 0:
        raise ConfigError(f"material.mu must be > 0, got {m.mu}")
    if not 2 * m.mu + 3 * m.lam > 0:
        raise ConfigError(f"material.lambda must satisfy 2*mu + 3*lambda > 0, got 2*mu + 3*lambda = "
                          f"{2 * m.mu + 3 * m.lam:g}")
    if not 0 <= m.eps <= 1:
        raise ConfigError(f"material.eps must lie in [0, 1], got {m.eps}")
    if not 0 < m.c0 <= m.C0:
        raise ConfigError("material.c0 and material.C0 must satisfy 0 < c0 <= C0")
    if isinstance(m.rho0, float) and not m.c0 <= m.rho0 <= m.C0:
        raise ConfigError(f"material.rho0 must lie in [c0, C0] = [{m.c0}, {m.C0}], got {m.rho0}")
    if cfg.bc.kind not in ("no_slip", "navier_slip"):
        raise ConfigError(f"bc.kind must be 'no_slip' or 'navier_slip', got {cfg.bc.kind!r}")
    if not cfg.bc.alpha >= 0:
        raise ConfigError(f"bc.alpha must be >= 0, got {cfg.bc.alpha}")
    if cfg.initial.preset not in PRESETS:
        raise ConfigError(f"initial.preset must be one of {PRESETS}, got {cfg.initial.preset!r}")
    if cfg.initial.compat_order not in (-1, 0, 1):
        raise ConfigError("initial.compat_order must be -1 (no projection), 0 or 1")
    if cfg.output.snapshot_cadence < 1 or cfg.output.diag_cadence < 1:
        raise ConfigError("output.snapshot_cadence and output.diag_cadence must be >= 1")
    for name in ("phi1", "phi2", "phi3", "v1", "v2", "v3"):
        _parse_expr(getattr(cfg.initial, name), f"initial.{name}")
    if isinstance(m.rho0, str):
        _parse_expr(m.rho0, "material.rho0")
    # grid, integrator and material objects carry their own checks
    grid = cfg.make_grid()
    cfg.make_integrator()
    cfg.make_bc()
    cfg.make_params(grid)


# --- analytic expressions ---------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def smooth_window(s, a: float, b: float, ramp: float):
    """C-infinity window: 0 outside (a, b), 1 on [a + ramp, b - ramp]."""
    def step(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
            g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        return f / (f + g)
    s = np.asarray(s, dtype=float)
    return step((s - a) / ramp) * step((b - s) / ramp)


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "sqrt": np.sqrt, "abs": np.abs,
          "window": smooth_window}
_CONSTS = {"pi": math.pi}


def _parse_expr(text: str, key: str) -> ast.Expression:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{key}: invalid expression {text!r} ({exc.msg})") from None
    for node in ast.walk(tree):
        ok = isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant,
                               ast.Load, *_BINOPS, *_UNOPS))
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            ok = False
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                and node.id not in ("x", "y", "z", "L_x", "L_y", "L_z"):
            raise ConfigError(f"{key}: unknown name {node.id!r} in expression")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            ok = False
        if not ok:
            raise ConfigError(f"{key}: unsupported construct {type(node).__name__} in expression")
    return tree


def evaluate(text: str, grid: Grid, key: str = "expression") -> np.ndarray:
    """Evaluate an arithmetic expression in x, y, z on the grid nodes."""
    tree = _parse_expr(text, key)
    env = {"x": grid.coords[0], "y": grid.coords[1], "z": grid.coords[2], "L_x": grid.L_x, "L_y": grid.L_y,
           "L_z": grid.L_z, **_CONSTS}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ConfigError(f"{key}: unsupported construct")  # pragma: no cover

    return np.broadcast_to(np.asarray(ev(tree), dtype=float), grid.shape)


# --- presets ----------------------------------------------------------------------

def standard_profile(z: np.ndarray) -> np.ndarray:
    """0.1 exp(-((z - 0.25) / 0.08)^2), smoothly cut to the support [0.05, 0.45]."""
    return 0.1 * np.exp(-(((z - 0.25) / 0.08) ** 2)) * smooth_window(z, 0.05, 0.45, 0.05)


def layer_profile(z: np.ndarray, dz: float) -> np.ndarray:
    """Uniform 0.1 near the wall, cut to zero at the wall over 8 dz and tapered off between 0.15 and 0.95."""
    far = smooth_window(z, -1.0, 0.95, 0.8)
    return 0.1 * (1.0 - cutoff(z / (8.0 * dz))) * far


def initial_state(cfg: RunConfig, grid: Grid | None = None) -> FlowMapState:
    """Raw (unprojected) initial data for the configured preset."""
    grid = grid or cfg.make_grid()
    state = FlowMapState.rest(grid)
    z = grid.coords[2]
    preset = cfg.initial.preset
    if preset == "standard":
        state.vel[0] = standard_profile(z)
    elif preset == "compressive":
        state.vel[0] = standard_profile(z)
        state.vel[2] = 0.5 * standard_profile(z)
    elif preset == "layer":
        state.vel[0] = layer_profile(z, grid.dz)
    elif preset == "custom":
        ini = cfg.initial
        for i, name in enumerate(("phi1", "phi2", "phi3")):
            state.eta[i] = state.eta[i] + evaluate(getattr(ini, name), grid, f"initial.{name}")
        for i, name in enumerate(("v1", "v2", "v3")):
            state.vel[i] = evaluate(getattr(ini, name), grid, f"initial.{name}")
    return state


def prepared_initial(cfg: RunConfig, grid: Grid | None = None) -> FlowMapState:
    """Initial data after compatibility projection at ``initial.compat_order`` (-1 skips it)."""
    grid = grid or cfg.make_grid()
    raw = initial_state(cfg, grid)
    if cfg.initial.compat_order < 0:
        return raw
    return compat_project(raw, cfg.make_params(grid), cfg.make_bc(), grid, cfg.initial.compat_order)


def standard_config(**sections) -> RunConfig:
    """The pinned standard test case, optionally with per-section overrides."""
    return RunConfig().with_overrides(**sections) if sections else RunConfig()


def layer_config(**sections) -> RunConfig:
    """Boundary-layer probe: uniform near-wall shear data on a fine column."""
    base = RunConfig(grid=GridSection(n_z=513), initial=InitialSection(preset="layer"),
                     integrator=IntegratorSection(scheme="imex_viscous", t_final=0.5, snapshot_every=20))
    return base.with_overrides(**sections) if sections else base
