"""Command-line interface: ``viscolimit {run, sweep, check-identities, compat-init, report}``.

Failures exit with a nonzero status and print a one-line JSON object
``{"error": <type>, "message": <text>}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import __version__
from .boundary import compat_residuals
from .config import RunConfig, initial_state, load_config, prepared_initial, standard_config
from .diagnostics import build_reports
from .errors import ConfigError, TruncationBreach
from .identities import identity_suite
from .integrate import run
from .material import MaterialParams, pressure, q_potential
from .storage import (check_same_config, output_lock, read_json, sweep_document, write_dat,
                      write_diagnostics_csv, write_json, write_snapshot, write_sweep_csv)
from .sweep import SWEEP_MODES, SweepPlan, run_sweep

EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _eps_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in _csv_list(text))
    except ValueError:
        raise ConfigError(f"--eps must be a comma-separated list of numbers, got {text!r}") from None


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else standard_config()
    over = {}
    if getattr(args, "bc", None) and "," not in args.bc:
        over["bc"] = {"kind": args.bc}
    if getattr(args, "mode", None) and "," not in args.mode:
        if args.mode not in SWEEP_MODES:
            raise ConfigError(f"--mode must be one of {SWEEP_MODES}, got {args.mode!r}")
        over["material"] = {"elastic_on": args.mode == "viscoelastic"}
    cfg = cfg.with_overrides(**over) if over else cfg
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output.directory)


# --- run ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args)
    if args.eps is not None:
        eps = _eps_list(args.eps)
        if len(eps) != 1:
            raise ConfigError("run takes a single --eps value")
        cfg = cfg.with_eps(eps[0])
    grid = cfg.make_grid()
    params = cfg.make_params(grid)
    bc = cfg.make_bc()
    h = cfg.hash()
    out = _out_dir(args, cfg)
    with output_lock(out):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationBreach)  # logged in the trajectory instead
            traj = run(prepared_initial(cfg, grid), params, bc, grid, cfg.make_integrator(), strict=False)
        files = []
        for n, s in enumerate(traj.snapshots[::cfg.output.snapshot_cadence]):
            name = f"snap_{n:05d}.vlsn"
            meta = write_snapshot(out / name, s, grid, h, traj.guard_trips)
            files.append({"file": name, "t": s.t, "content_id": meta["content_id"]})
        reports = build_reports(traj.snapshots, traj.energy_log, params, bc, grid)
        write_diagnostics_csv(out / "diagnostics.csv", reports[::cfg.output.diag_cadence], h)
        write_json(out / "manifest.json", {
            "config_hash": h, "config": cfg.to_dict(), "status": traj.status, "steps": traj.steps,
            "t_final": traj.snapshots[-1].t, "guard_trips": traj.guard_trips, "snapshots": files,
            "diagnostics": "diagnostics.csv", "version": __version__})
    print(f"{traj.status}: {traj.steps} steps, {len(files)} snapshots -> {out}")
    if not traj.completed:
        _error(traj.status, traj.guard_trips[-1]["message"] if traj.guard_trips else traj.status)
        return EXIT_FAILURE
    return 0


# --- sweep ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    cfg = _load(args)
    kw = {}
    if args.eps:
        kw["eps_list"] = _eps_list(args.eps)
    if args.bc:
        kw["bc_kinds"] = tuple(_csv_list(args.bc))
    if args.mode:
        kw["modes"] = tuple(_csv_list(args.mode))
    plan = SweepPlan(cfg, workers=args.workers, **kw)
    out = _out_dir(args, cfg)
    with output_lock(out):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationBreach)
            result = run_sweep(plan)
        doc = sweep_document(result, cfg.hash(), cfg.to_dict())
        doc["plan"] = {"eps_list": plan.eps_list, "modes": plan.modes, "bc_kinds": plan.bc_kinds,
                       "include_inviscid": plan.include_inviscid, "m_impl": plan.m_impl,
                       "bl_window": plan.bl_window}
        write_json(out / "sweep.json", doc)
        write_sweep_csv(out / "sweep.csv", doc)
    print(_sweep_tables(doc))
    return 0


# --- check-identities -----------------------------------------------------------------

def identity_checks(seed: int, n_maps: int = 100) -> list[tuple[str, float, str, bool]]:
    """(check, value, requirement, passed) rows for the geometry and material oracles."""
    r = identity_suite(seed, n_maps)
    rows = [
        ("piola rate (min)", r["piola_rate_min"], ">= 1.7", r["piola_rate_min"] >= 1.7),
        ("piola rate (max)", r["piola_rate_max"], "<= 2.3", r["piola_rate_max"] <= 2.3),
        ("cofactor vs J A^T rate (min)", r["a_rate_min"], ">= 1.7", r["a_rate_min"] >= 1.7),
        ("cofactor vs J A^T rate (max)", r["a_rate_max"], "<= 2.3", r["a_rate_max"] <= 2.3),
        ("cofactor vs LU", r["cofactor_vs_lu"], "< 1e-12", r["cofactor_vs_lu"] < 1e-12),
        ("J row expansions", r["det_expansion"], "< 1e-12", r["det_expansion"] < 1e-12),
        ("min J", r["min_J"], "> 0", r["min_J"] > 0),
        ("strain-rate symmetry", r["strain_symmetry"], "== 0", r["strain_symmetry"] == 0.0),
    ]
    rng = np.random.default_rng(seed)
    q_err, Q_err = 0.0, 0.0
    for _ in range(50):
        gamma = rng.uniform(1.05, 3.0)
        rho0 = rng.uniform(0.5, 2.0)
        params = MaterialParams(gamma=gamma, rho0=rho0)
        J = rng.uniform(0.3, 3.0)
        q_err = max(q_err, abs(float(pressure(np.array(J), params)) / (rho0 / J) ** gamma - 1.0))
        f = rng.uniform(0.2, 5.0)
        ref, _ = quad(lambda s: s ** (gamma - 2.0), 1.0, f, epsabs=1e-14, epsrel=1e-13)
        Q_err = max(Q_err, abs(float(q_potential(np.array(f), params)) - ref))
    rows += [("pressure q = (rho0 / J)^gamma (rel)", q_err, "< 1e-13", q_err < 1e-13),
             ("Q(f) against quadrature", Q_err, "< 1e-10", Q_err < 1e-10)]
    return rows


def cmd_check_identities(args) -> int:
    rows = identity_checks(args.seed, args.maps)
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'value':>12}  {'requirement':<10}  result")
    for name, value, req, ok in rows:
        print(f"{name:<{width}}  {value:12.4e}  {req:<10}  {'PASS' if ok else 'FAIL'}")
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        _error("IdentityCheckFailed", "failed: " + ", ".join(failed))
        return EXIT_FAILURE
    return 0


# --- compat-init --------------------------------------------------------------------

def cmd_compat_init(args) -> int:
    cfg = _load(args)
    if args.eps is not None:
        cfg = cfg.with_eps(_eps_list(args.eps)[0])
    if args.order is not None:
        cfg = cfg.with_overrides(initial={"compat_order": args.order})
    order = cfg.initial.compat_order
    grid = cfg.make_grid()
    params = cfg.make_params(grid)
    bc = cfg.make_bc()
    raw = initial_state(cfg, grid)
    state = prepared_initial(cfg, grid)
    out = _out_dir(args, cfg)
    with output_lock(out):
        meta = write_snapshot(out / "initial.vlsn", state, grid, cfg.hash())
        res = {}
        for k in range(max(order, 0) + 1):
            res[f"order{k}_before"] = float(np.max(np.abs(compat_residuals(raw, params, bc, grid, k))))
            res[f"order{k}_after"] = float(np.max(np.abs(compat_residuals(state, params, bc, grid, k))))
        write_json(out / "initial.json", {"config_hash": cfg.hash(), "config": cfg.to_dict(),
                                          "compat_order": order, "residuals": res,
                                          "content_id": meta["content_id"]})
    for k, v in res.items():
        print(f"{k:14s} {v:.3e}")
    return 0


# --- report -------------------------------------------------------------------------

def _fmt(v) -> str:
    return "       n/a" if v is None else f"{v:10.3e}"


def _sweep_tables(doc: dict) -> str:
    lines = [f"config {doc['config_hash'][:12]}  dt = {doc['dt']:.4e}  t_final = {doc['t_final']}"]
    groups = sorted({(r["bc"], r["mode"]) for r in doc["records"]})
    for bc, mode in groups:
        lines.append("")
        lines.append(f"[{bc} / {mode}]")
        lines.append(f"{'eps':>10} {'status':>12} {'|eta-eta0|':>10} {'|v-v0|':>10} {'|Deta-D0|':>10} "
                     f"{'max E_m':>10} {'layer':>10}")
        for r in doc["records"]:
            if (r["bc"], r["mode"]) != (bc, mode):
                continue
            lines.append(f"{r['eps']:10.3e} {r['status'][:12]:>12} {_fmt(r['sup_eta_diff'])} {_fmt(r['sup_v_diff'])} "
                         f"{_fmt(r['sup_grad_eta_diff'])} {_fmt(r['max_energy_functional'])} "
                         f"{_fmt(r['max_bl_indicator'])}")
        fits = doc["fitted_rates"].get(f"{bc}/{mode}", {})
        for name, fit in fits.items():
            lines.append(f"  rate {name:18s} slope {_fmt(fit['slope'])}  r2 {_fmt(fit['r2'])}"
                         + (f"  ({fit['flag']})" if fit.get("flag") else ""))
        lay = doc["layer_exponent"].get(f"{bc}/{mode}", {})
        lines.append(f"  layer exponent{'':10s} slope {_fmt(lay.get('slope'))}  r2 {_fmt(lay.get('r2'))}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    docs = [read_json(p) for p in args.inputs]
    h = check_same_config(docs)
    merged = {"config_hash": h, "dt": docs[0]["dt"], "t_final": docs[0]["t_final"],
              "records": [r for d in docs for r in d["records"]], "fitted_rates": {}, "layer_exponent": {}}
    for d in docs:
        merged["fitted_rates"].update(d["fitted_rates"])
        merged["layer_exponent"].update(d["layer_exponent"])
    print(_sweep_tables(merged))
    if args.out:
        out = Path(args.out)
        with output_lock(out):
            cols = ["eps", "sup_eta_diff", "sup_v_diff", "sup_grad_eta_diff", "max_energy_functional",
                    "max_bl_indicator"]
            for bc, mode in sorted({(r["bc"], r["mode"]) for r in merged["records"]}):
                rows = [[r[c] for c in cols] for r in merged["records"]
                        if (r["bc"], r["mode"]) == (bc, mode) and r["eps"] > 0]
                write_dat(out / f"{bc}_{mode}.dat", cols, rows)
            write_json(out / "report.json", merged)
    return 0


# --- entry point ----------------------------------------------------------------------

def _error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscolimit", description="Vanishing-viscosity experiments on a half-space slab.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, eps_help):
        sp.add_argument("--config", help="TOML run configuration (default: the standard test case)")
        sp.add_argument("--out", help="output directory (default: output.directory from the config)")
        sp.add_argument("--eps", help=eps_help)
        sp.add_argument("--bc", help="boundary condition kind(s): no_slip, navier_slip")
        sp.add_argument("--mode", help="viscoelastic or ns_contrast")

    sp = sub.add_parser("run", help="integrate one trajectory")
    common(sp, "viscosity eps (overrides material.eps)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run an eps-family and fit convergence rates")
    common(sp, "comma-separated eps list, strictly decreasing")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check-identities", help="geometry and material oracle suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--maps", type=int, default=100, help="number of random maps")
    sp.set_defaults(func=cmd_check_identities)

    sp = sub.add_parser("compat-init", help="project initial data onto the compatibility conditions")
    common(sp, "viscosity eps used by the projection")
    sp.add_argument("--order", type=int, choices=(-1, 0, 1))
    sp.set_defaults(func=cmd_compat_init)

    sp = sub.add_parser("report", help="render sweep JSON files as tables and gnuplot data")
    sp.add_argument("inputs", nargs="+", help="sweep.json files (must share one config hash)")
    sp.add_argument("--out", help="directory for .dat files")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        _error(type(exc).__name__, str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
