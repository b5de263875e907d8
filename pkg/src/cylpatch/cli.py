"""Command-line front end.

Six subcommands: steady-check, stability, perimeter-growth,
rearrange-test, kernel-table, resume. Every run writes an output
directory containing config.echo (the fully resolved configuration,
INI), series.csv (when a flow is integrated), report.json, and contour
checkpoints. The directory is --out if given, otherwise
$CYLPATCH_OUTDIR/<subcommand>, otherwise ./cylpatch_out/<subcommand>.

Settings come from defaults, then an INI file (--config, sections [run]
and [experiment]), then flags. Exit status: 0 all criteria passed,
1 criteria failed or the solver aborted (failure.json holds the abort
reason), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys

from .errors import ConfigError, CylpatchError
from .dynamics import (RunConfig, read_wall_series, resolve_config, resume_state, run,
                       truncate_wall_series)
from .geometry import make_rectangle, make_strip
from . import experiments as ex

ENV_OUTDIR = "CYLPATCH_OUTDIR"

_INT_FIELDS = {"nodes0", "output_every", "raster_res", "max_remesh_passes"}
_FLOAT_FIELDS = {"dt", "t_end", "dmax", "dmin_factor", "speed_limit", "area_tol"}

_DEFAULTS = {
    "steady-check": dict(dt=0.05, t_end=5.0, nodes0=256, output_every=20, raster_res=1024),
    "stability": dict(dt=0.04, t_end=20.0, nodes0=512, output_every=10, raster_res=4096),
    "perimeter-growth": dict(dt=0.04, t_end=20.0, nodes0=512, output_every=10, raster_res=4096),
}


def _parse_scalar(key: str, raw: str):
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def read_config_file(path: str) -> tuple[dict, dict]:
    """Sections [run] and [experiment] of an INI file as two dicts."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path}")
    run_d = {k: _parse_scalar(k, v) for k, v in cp.items("run")} if cp.has_section("run") else {}
    exp_d = dict(cp.items("experiment")) if cp.has_section("experiment") else {}
    unknown = set(run_d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown [run] keys: {sorted(unknown)}")
    return run_d, exp_d


def write_config_echo(cfg: RunConfig, experiment: str, args: dict, path: str) -> None:
    cp = configparser.ConfigParser()
    cp["run"] = {k: repr(v) if isinstance(v, float) else str(v)
                 for k, v in dataclasses.asdict(cfg).items() if k != "out_dir"}
    cp["run"]["out_dir"] = cfg.out_dir or ""
    cp["experiment"] = {"name": experiment, **{k: str(v) for k, v in args.items()}}
    with open(path, "w", encoding="ascii") as fh:
        cp.write(fh)


def read_config_echo(path: str) -> tuple[RunConfig, str, dict]:
    run_d, exp_d = read_config_file(path)
    name = exp_d.pop("name", "")
    if not name:
        raise ConfigError(f"{path} does not name its experiment")
    out_dir = run_d.pop("out_dir", "") or None
    cfg = RunConfig(**run_d, out_dir=out_dir)
    return cfg, name, exp_d


def _build_cfg(ns, subcommand: str) -> RunConfig:
    settings = dict(_DEFAULTS.get(subcommand, {}))
    exp_args = {}
    if ns.config:
        run_d, exp_d = read_config_file(ns.config)
        settings.update(run_d)
        exp_args.update(exp_d)
    for flag, field in (("dt", "dt"), ("T", "t_end"), ("nodes", "nodes0"),
                        ("output_every", "output_every"), ("raster_res", "raster_res"),
                        ("dmax", "dmax")):
        v = getattr(ns, flag, None)
        if v is not None:
            settings[field] = v
    file_out = settings.pop("out_dir", None)
    out = ns.out if ns.out is not None else file_out
    if not out:
        base = os.environ.get(ENV_OUTDIR, "cylpatch_out")
        out = os.path.join(base, subcommand)
    cfg = RunConfig(**settings, out_dir=out)
    ns._exp_args = exp_args
    return cfg


def _print_report(criteria: dict) -> bool:
    ok = True
    for name, c in criteria.items():
        status = "PASS" if c["pass"] else "FAIL"
        ok &= c["pass"]
        print(f"{status} {name}: value={c['value']:.6g} threshold={c['threshold']} ({c['op']})")
    print("PASSED" if ok else "FAILED")
    return ok


def _finish_report(report, out_dir: str) -> int:
    ex.write_report(report, os.path.join(out_dir, "report.json"))
    ok = _print_report(report.criteria)
    return 0 if ok else 1


def _get_h(ns) -> float:
    if ns.h is not None:
        return ns.h
    raw = ns._exp_args.get("h")
    if raw is None:
        raise ConfigError("this experiment needs --h (or h in the [experiment] section)")
    return float(raw)


def cmd_steady_check(ns) -> int:
    cfg = _build_cfg(ns, "steady-check")
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg = resolve_config(cfg, make_strip(cfg.nodes0))
    write_config_echo(cfg, "steady-check", {}, os.path.join(cfg.out_dir, "config.echo"))
    report = ex.steady_strip_experiment(cfg)
    return _finish_report(report, cfg.out_dir)


def _rect_command(ns, name: str) -> int:
    cfg = _build_cfg(ns, name)
    h = _get_h(ns)
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg = resolve_config(cfg, make_rectangle(h, h / 2.5, cfg.nodes0))
    write_config_echo(cfg, name, {"h": h}, os.path.join(cfg.out_dir, "config.echo"))
    if name == "stability":
        report = ex.stability_experiment(cfg, h)
    else:
        report = ex.perimeter_growth_experiment(cfg, h)
    return _finish_report(report, cfg.out_dir)


def cmd_rearrange_test(ns) -> int:
    cfg = _build_cfg(ns, "rearrange-test")
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_config_echo(cfg, "rearrange-test", {"seed": ns.seed, "cases": ns.cases},
                      os.path.join(cfg.out_dir, "config.echo"))
    report = ex.rearrangement_suite(ns.seed, ns.cases)
    with open(os.path.join(cfg.out_dir, "report.json"), "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    return 0 if _print_report(report["criteria"]) else 1


def cmd_kernel_table(ns) -> int:
    cfg = _build_cfg(ns, "kernel-table")
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_config_echo(cfg, "kernel-table", {"seed": ns.seed},
                      os.path.join(cfg.out_dir, "config.echo"))
    rows = ex.kernel_identity_table(ns.seed)
    with open(os.path.join(cfg.out_dir, "kernel_table.csv"), "w", encoding="ascii") as fh:
        fh.write("name,value,reference,abs_err,tol,pass\n")
        for r in rows:
            fh.write("%s,%.12g,%.12g,%.12g,%g,%s\n"
                     % (r["name"], r["value"], r["reference"], r["abs_err"], r["tol"], r["pass"]))
    criteria = {r["name"]: {"value": r["abs_err"], "threshold": r["tol"],
                            "op": "<=", "pass": r["pass"]} for r in rows}
    report = {"schema": 1, "experiment": "kernel-table", "criteria": criteria,
              "passed": all(r["pass"] for r in rows)}
    with open(os.path.join(cfg.out_dir, "report.json"), "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    return 0 if _print_report(criteria) else 1


def cmd_resume(ns) -> int:
    run_dir = getattr(ns, "from")
    echo_path = os.path.join(run_dir, "config.echo")
    cfg, name, exp_args = read_config_echo(echo_path)
    if name not in ("stability", "perimeter-growth"):
        raise ConfigError("resume supports the stability and perimeter-growth experiments")
    if cfg.out_dir != run_dir:
        cfg = dataclasses.replace(cfg, out_dir=run_dir)
    if ns.T is not None:
        cfg = dataclasses.replace(cfg, t_end=ns.T)
    if not cfg.dmax > 0.0:
        raise ConfigError(f"{echo_path} lacks a resolved dmax; cannot resume")
    state = resume_state(run_dir, cfg)
    series_path = os.path.join(run_dir, "series.csv")
    if os.path.exists(series_path):
        ex.truncate_series(series_path, state.t)
    truncate_wall_series(run_dir, state.t)
    logger = ex.SeriesLogger(series_path, cfg.raster_res, append=True)
    try:
        run(cfg, state=state, observer=logger)
    finally:
        logger.close()
    write_config_echo(cfg, name, exp_args, echo_path)
    records = ex.read_series(series_path)
    wall = read_wall_series(run_dir)
    h = float(exp_args["h"])
    report = ex.evaluate_rectangle_report(name, cfg, h, records, wall)
    return _finish_report(report, run_dir)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cylpatch",
        description="Vortex patch contour dynamics on the half cylinder: "
                    "steady-state, stability, and perimeter-growth experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--config", help="INI file with [run] and [experiment] sections")
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUTDIR} or ./cylpatch_out)")
        if solver:
            sp.add_argument("--dt", type=float, help="time step")
            sp.add_argument("--T", type=float, help="horizon")
            sp.add_argument("--nodes", type=int, help="initial marker count")
            sp.add_argument("--output-every", dest="output_every", type=int,
                            help="steps between diagnostic records")
            sp.add_argument("--raster-res", dest="raster_res", type=int,
                            help="scanline rows for set diagnostics")
            sp.add_argument("--dmax", type=float, help="remesh spacing bound")

    sp = sub.add_parser("steady-check", help="strip must hold still for T=5")
    common(sp)
    sp.set_defaults(func=cmd_steady_check)

    for name, hlp in (("stability", "thin rectangle stays close to the strip"),
                      ("perimeter-growth", "rectangle boundary grows linearly")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--h", type=float, help="rectangle half-thickness in (0, 0.25]")
        sp.set_defaults(func=lambda ns, _n=name: _rect_command(ns, _n))

    sp = sub.add_parser("rearrange-test", help="rearrangement property suite")
    common(sp, solver=False)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--cases", type=int, default=100)
    sp.set_defaults(func=cmd_rearrange_test)

    sp = sub.add_parser("kernel-table", help="kernel spot values and identities")
    common(sp, solver=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_kernel_table)

    sp = sub.add_parser("resume", help="continue an interrupted run from its directory")
    sp.add_argument("--from", required=True, help="run directory with config.echo and checkpoints")
    sp.add_argument("--T", type=float, help="extend the horizon")
    sp.set_defaults(func=cmd_resume)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(ns, "_exp_args"):
        ns._exp_args = {}
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CylpatchError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
