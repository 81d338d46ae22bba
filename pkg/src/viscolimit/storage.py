"""On-disk formats: binary snapshots, diagnostics CSV, JSON manifests and sweep summaries.

Snapshot layout (little-endian)::

    magic      4 bytes   b"VLSN"
    version    u32       1
    mode       u32       0 = column1d, 1 = slab2d, 2 = slab3d
    n_x n_y n_z u32 x 3
    L_x L_y L_z f64 x 3
    t          f64
    eta        f64 x 3 N   node-major, component fastest
    v          f64 x 3 N

Nodes are ordered x-slowest, z-fastest. Next to ``name.vlsn`` a sidecar
``name.vlsn.json`` records the config hash, a git-style content id of the
binary file and the guard-trip log.

Every CSV and JSON artifact carries the config hash of the run that produced
it; :func:`check_same_config` refuses to combine artifacts whose hashes differ.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .diagnostics import REPORT_COLUMNS, DiagnosticsReport
from .errors import SnapshotError
from .geometry import FlowMapState
from .grid import MODES, Grid, make_grid

MAGIC = b"VLSN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIdddd")
CSV_COLUMNS = REPORT_COLUMNS + ("config_hash",)


class OutputLocked(RuntimeError):
    """Another writer holds the output directory."""


class MixedConfigError(ValueError):
    """Artifacts from different configurations were combined."""


def content_id(data: bytes) -> str:
    """sha1 of ``b"blob <size>\\0" + data``, the id git would assign to the file."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _node_major(field: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(field, 0, -1), dtype="<f8")


def snapshot_bytes(state: FlowMapState, grid: Grid) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, MODES.index(grid.mode), grid.n_x, grid.n_y, grid.n_z,
                          grid.L_x, grid.L_y, grid.L_z, float(state.t))
    return header + _node_major(state.eta).tobytes() + _node_major(state.vel).tobytes()


def write_snapshot(path, state: FlowMapState, grid: Grid, config_hash: str = "",
                   guard_trips=()) -> dict:
    """Write the binary snapshot and its sidecar; returns the sidecar contents."""
    path = Path(path)
    data = snapshot_bytes(state, grid)
    _atomic_write(path, data)
    meta = {"config_hash": config_hash, "content_id": content_id(data), "t": float(state.t),
            "grid": {"mode": grid.mode, "n_x": grid.n_x, "n_y": grid.n_y, "n_z": grid.n_z,
                     "L_x": grid.L_x, "L_y": grid.L_y, "L_z": grid.L_z},
            "guard_trips": list(guard_trips)}
    write_json(path.with_name(path.name + ".json"), meta)
    return meta


def parse_snapshot(data: bytes) -> tuple[FlowMapState, Grid]:
    if len(data) < _HEADER.size:
        raise SnapshotError(f"corrupt header: file has {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, mode, n_x, n_y, n_z, L_x, L_y, L_z, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"corrupt header: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (this reader handles {VERSION})")
    if mode >= len(MODES):
        raise SnapshotError(f"corrupt header: unknown grid mode code {mode}")
    try:
        grid = make_grid(MODES[mode], n_x, n_y, n_z, L_x, L_y, L_z)
    except ValueError as exc:
        raise SnapshotError(f"corrupt header: {exc}") from None
    n_vals = 3 * grid.n_nodes
    expected = _HEADER.size + 2 * 8 * n_vals
    if len(data) != expected:
        raise SnapshotError(f"size mismatch: expected {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    shape = grid.shape + (3,)
    eta = np.moveaxis(body[:n_vals].reshape(shape), -1, 0).astype(float)
    vel = np.moveaxis(body[n_vals:].reshape(shape), -1, 0).astype(float)
    return FlowMapState(np.ascontiguousarray(eta), np.ascontiguousarray(vel), t), grid


def read_snapshot(path, verify: bool = True) -> tuple[FlowMapState, Grid]:
    """Read a snapshot; with ``verify`` the sidecar content id (if present) must match."""
    path = Path(path)
    data = path.read_bytes()
    state, grid = parse_snapshot(data)
    side = path.with_name(path.name + ".json")
    if verify and side.exists():
        meta = json.loads(side.read_text())
        if meta.get("content_id") not in (None, content_id(data)):
            raise SnapshotError(f"content id mismatch between {path.name} and its sidecar")
    return state, grid


# --- CSV and JSON ---------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def write_diagnostics_csv(path, reports: list[DiagnosticsReport], config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow([_num(getattr(r, c)) for c in REPORT_COLUMNS] + [config_hash])


def read_diagnostics_csv(path) -> tuple[list[dict], str]:
    """Rows as dicts of floats, plus the (single) config hash."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected diagnostics header")
    hashes = {r["config_hash"] for r in rows}
    if len(hashes) > 1:
        raise MixedConfigError(f"{path}: rows from {len(hashes)} configurations")
    out = [{c: float(r[c]) for c in REPORT_COLUMNS} for r in rows]
    return out, hashes.pop() if hashes else ""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    _atomic_write(Path(path), (text + "\n").encode())


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def check_same_config(docs: list[dict]) -> str:
    """Common ``config_hash`` of the given artifacts; raises if they disagree."""
    hashes = {d.get("config_hash") for d in docs}
    if None in hashes:
        raise MixedConfigError("artifact without config_hash")
    if len(hashes) != 1:
        raise MixedConfigError(f"artifacts come from {len(hashes)} different configurations: "
                               + ", ".join(sorted(h[:12] for h in hashes)))
    return hashes.pop()


# --- sweep outputs ----------------------------------------------------------------

SWEEP_CSV_COLUMNS = ("eps", "bc", "mode", "status", "sup_eta_diff", "sup_v_diff", "sup_grad_eta_diff",
                     "max_energy_functional", "max_bl_indicator", "wall_limit_residual", "config_hash")


def sweep_document(result, config_hash: str, config: dict | None = None) -> dict:
    doc = result.to_dict()
    doc["config_hash"] = config_hash
    if config is not None:
        doc["config"] = config
    return doc


def write_sweep_csv(path, doc: dict) -> None:
    """One row per run, then ``rate`` rows with the fitted slopes (slope in ``sup_*`` columns)."""
    h = doc["config_hash"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_CSV_COLUMNS)
        for r in doc["records"]:
            w.writerow([r["eps"], r["bc"], r["mode"], r["status"]]
                       + ["" if r[c] is None else repr(float(r[c])) for c in SWEEP_CSV_COLUMNS[4:10]] + [h])
        for key, fits in doc["fitted_rates"].items():
            bc, mode = key.split("/")
            layer = doc["layer_exponent"].get(key, {})
            vals = [fits.get(c, {}).get("slope") for c in ("sup_eta_diff", "sup_v_diff", "sup_grad_eta_diff")]
            w.writerow(["rate", bc, mode, "fit"] + ["" if v is None else repr(v) for v in vals]
                       + ["", "" if layer.get("slope") is None else repr(layer["slope"]), "", h])


# --- output directory lock -------------------------------------------------------

@contextmanager
def output_lock(directory):
    """Exclusive lock file ``.viscolimit.lock`` in ``directory`` for the duration of the block."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".viscolimit.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLocked(f"{directory} is locked by another run ({lock} exists)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def write_dat(path, columns: list[str], rows) -> None:
    """Whitespace-separated table with a ``#`` header, readable by gnuplot."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join("nan" if v is None else (repr(float(v)) if isinstance(v, (int, float)) else str(v))
                              for v in row) + "\n")
