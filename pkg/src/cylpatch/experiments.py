"""Experiment drivers: diagnostic series, headline checks, property suites.

A run produces a time series of DiagRecord rows (mass, impulse, vertical
center, perimeter, the weighted distances to the reference strip, max
marker speed). The three headline experiments wrap the solver:

* steady strip: the x2-independent patch must not move, and its induced
  velocity must follow u2 = max(1 - x1, 0);
* stability: a thin rectangle glued to the wall stays close to the strip
  in the J1 distance, quantified by rho = sup_t j1 / (sqrt(d0) + d0);
* perimeter growth: the same rectangle's boundary length grows at least
  linearly, its tracked wall node rises at speed about 1, and the wall
  node outruns the vertical center by t/4.

Pass/fail flags are pure functions of the emitted series (plus the wall
node track stored in the report), so an external checker can recompute
every flag from the output files. All fitted rates and empirical
constants are reported, never asserted against non-measured values.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatchError
from .dynamics import FlowState, RunConfig, RunResult, resolve_config, run
from .geometry import (
    Patch,
    make_rectangle,
    make_strip,
    patch_area,
    patch_impulse,
    patch_perimeter,
    strip_velocity_profile,
    sym_diff_functionals,
    vertical_center,
)
from .kernel import gamma_s, kernel_s, velocity_from_contours
from .rearrange import (
    GridField,
    StripProfile,
    cutoff,
    impulse,
    l1_distance,
    level_measure,
    mass,
    mp_gap,
    nonexpansivity_check,
    rearrange,
)

TWO_PI = 2.0 * np.pi

DIAG_COLUMNS = ("t", "mass", "impulse", "k", "perimeter", "j1dist", "wsymdiff", "maxspeed")

__all__ = [
    "DIAG_COLUMNS",
    "DiagRecord",
    "ExperimentReport",
    "diagnose",
    "write_series",
    "read_series",
    "SeriesLogger",
    "truncate_series",
    "fit_slope",
    "stability_criteria",
    "perimeter_criteria",
    "conservation_criteria",
    "steady_strip_experiment",
    "stability_experiment",
    "perimeter_growth_experiment",
    "rectangle_run",
    "evaluate_rectangle_report",
    "velocity_gap_probe",
    "rearrangement_suite",
    "kernel_identity_table",
    "write_report",
]


@dataclass(frozen=True)
class DiagRecord:
    t: float
    mass: float
    impulse: float
    k: float
    perimeter: float
    j1dist: float
    wsymdiff: float
    maxspeed: float

    def __post_init__(self):
        row = self.as_row()
        if not np.all(np.isfinite(row)):
            raise ValueError(f"non-finite diagnostic at t = {self.t}")
        if not self.mass > 0.0:
            raise ValueError(f"mass must stay positive, got {self.mass}")

    def as_row(self) -> list[float]:
        return [getattr(self, name) for name in DIAG_COLUMNS]


def diagnose(state: FlowState, raster_res: int = 2048) -> DiagRecord:
    """All scalar diagnostics of a state; one velocity sweep for the speed."""
    p = state.patch
    sd = sym_diff_functionals(p, raster_res)
    pts = np.vstack([c.markers for c in p.contours])
    u = velocity_from_contours(p, pts)
    return DiagRecord(
        t=state.t,
        mass=patch_area(p),
        impulse=patch_impulse(p),
        k=vertical_center(p),
        perimeter=patch_perimeter(p),
        j1dist=sd["j1"],
        wsymdiff=sd["weighted"],
        maxspeed=float(np.hypot(u[:, 0], u[:, 1]).max()),
    )


# ---------------------------------------------------------------------------
# series file format: header row, then decimal ASCII at 12 significant digits


def _fmt_row(rec: DiagRecord) -> str:
    return ",".join("%.12g" % v for v in rec.as_row())


def write_series(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(DIAG_COLUMNS) + "\n")
        for rec in records:
            fh.write(_fmt_row(rec) + "\n")


def read_series(path) -> list[DiagRecord]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != ",".join(DIAG_COLUMNS):
            raise GridMismatchError(f"unexpected series header: {header!r}")
        out = []
        for line in fh:
            line = line.strip()
            if line:
                out.append(DiagRecord(*(float(v) for v in line.split(","))))
    return out


class SeriesLogger:
    """run() observer that appends each diagnostic row to a CSV as it is made.

    Incremental flushing means an aborted run still leaves a readable
    series next to its checkpoints, which is what resume continues.
    """

    def __init__(self, path, raster_res: int, append: bool = False):
        self.path = path
        self.raster_res = raster_res
        mode = "a" if append and os.path.exists(path) else "w"
        self._fh = open(path, mode, encoding="ascii")
        if mode == "w":
            self._fh.write(",".join(DIAG_COLUMNS) + "\n")
            self._fh.flush()

    def __call__(self, state: FlowState) -> DiagRecord:
        rec = diagnose(state, self.raster_res)
        self._fh.write(_fmt_row(rec) + "\n")
        self._fh.flush()
        return rec

    def close(self):
        self._fh.close()


def truncate_series(path, t_max: float) -> None:
    """Drop rows past t_max; heals a series that outran its last checkpoint."""
    records = [r for r in read_series(path) if r.t <= t_max + 1e-9]
    write_series(records, path)


# ---------------------------------------------------------------------------
# criteria: pure functions of the series (and the wall track)


def fit_slope(ts, ys) -> float:
    ts = np.asarray(ts, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return float(np.polyfit(ts, ys, 1)[0])


def _crit(value: float, threshold, op: str) -> dict:
    if op == "<=":
        ok = value <= threshold
    elif op == ">=":
        ok = value >= threshold
    elif op == "in":
        ok = threshold[0] <= value <= threshold[1]
    else:
        raise ValueError(f"unknown op {op!r}")
    return {"value": value, "threshold": threshold, "op": op, "pass": bool(ok)}


def stability_criteria(records) -> tuple[dict, dict]:
    """rho = sup j1 / (sqrt(d0) + d0) <= 20, and the running sup of j1 must
    gain at most 5% over the final half of the horizon."""
    t = np.array([r.t for r in records])
    j1 = np.array([r.j1dist for r in records])
    d0 = j1[0]
    run_sup = np.maximum.accumulate(j1)
    rho = float(run_sup[-1] / (math.sqrt(d0) + d0))
    half = np.searchsorted(t, 0.5 * t[-1])
    sup_half = float(run_sup[min(half, len(t) - 1)])
    growth = float((run_sup[-1] - sup_half) / max(sup_half, 1e-30))
    constants = {"d0": float(d0), "sup_j1": float(run_sup[-1]), "rho": rho,
                 "last_half_sup_growth": growth}
    criteria = {
        "stability_ratio": _crit(rho, 20.0, "<="),
        "sup_flat_last_half": _crit(growth, 0.05, "<="),
    }
    return constants, criteria


def perimeter_criteria(records, wall_series, fit_window=(5.0, 20.0)) -> tuple[dict, dict]:
    t = np.array([r.t for r in records])
    per = np.array([r.perimeter for r in records])
    k = np.array([r.k for r in records])
    lo, hi = fit_window
    sel = (t >= lo) & (t <= hi)
    if not sel.any():
        raise ConfigError(f"no samples inside the fit window {fit_window}")
    growth_rate = float(((per[sel] - per[0]) / t[sel]).min())
    rates = {
        "k_slope": fit_slope(t, k),
        "perimeter_slope": fit_slope(t[sel], per[sel]),
    }
    criteria = {
        "perimeter_growth": _crit(growth_rate, 0.25, ">="),
        "k_slope": _crit(rates["k_slope"], (0.4, 0.6), "in"),
    }
    if wall_series is not None:
        wt = wall_series[:, 0]
        phi2 = wall_series[:, 1]
        wsel = (wt >= lo) & (wt <= hi)
        kw = np.interp(wt, t, k)
        rates["wall_slope"] = fit_slope(wt, phi2)
        criteria["wall_height"] = _crit(float((phi2[wsel] / wt[wsel]).min()), 0.5, ">=")
        criteria["separation"] = _crit(
            float(((phi2[wsel] - kw[wsel]) / wt[wsel]).min()), 0.25, ">="
        )
    return rates, criteria


def conservation_criteria(records) -> tuple[dict, dict]:
    """Relative drifts of the conserved quantities over the whole series."""
    mass = np.array([r.mass for r in records])
    imp = np.array([r.impulse for r in records])
    wsd = np.array([r.wsymdiff for r in records])
    drift = lambda q: float(np.abs(q - q[0]).max() / abs(q[0]))
    constants = {"mass_drift": drift(mass), "impulse_drift": drift(imp),
                 "wsymdiff_drift": drift(wsd)}
    criteria = {
        "mass_drift": _crit(constants["mass_drift"], 0.005, "<="),
        "impulse_drift": _crit(constants["impulse_drift"], 0.01, "<="),
        "wsymdiff_drift": _crit(constants["wsymdiff_drift"], 0.02, "<="),
    }
    return constants, criteria


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    rates: dict
    constants: dict
    criteria: dict
    passed: bool
    series: list
    wall_series: list | None = None

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "experiment": self.experiment,
            "config": self.config,
            "rates": self.rates,
            "constants": self.constants,
            "criteria": self.criteria,
            "passed": self.passed,
            "series_file": "series.csv",
            "wall_series": self.wall_series,
        }


def write_report(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")


def _config_echo(cfg: RunConfig, **extra) -> dict:
    d = dataclasses.asdict(cfg)
    d.update(extra)
    return d


def _finish(experiment, cfg, records, wall, rates, constants, criteria, **extra) -> ExperimentReport:
    passed = all(c["pass"] for c in criteria.values())
    wall_list = wall.tolist() if wall is not None else None
    return ExperimentReport(
        experiment=experiment,
        config=_config_echo(cfg, **extra),
        rates=rates,
        constants=constants,
        criteria=criteria,
        passed=passed,
        series=records,
        wall_series=wall_list,
    )


# ---------------------------------------------------------------------------
# experiments


def _observer(cfg: RunConfig, append=False):
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        return SeriesLogger(os.path.join(cfg.out_dir, "series.csv"), cfg.raster_res, append)
    return lambda st: diagnose(st, cfg.raster_res)


def steady_strip_experiment(cfg: RunConfig) -> ExperimentReport:
    """The strip must hold still (standard horizon T = 5).

    Passes iff every marker of the x1 = 1 circle ends within 1e-4 of
    where it started and the induced velocity matches max(1 - x1, 0)
    within 1e-3 at sample points spanning both branches.
    """
    strip = make_strip(cfg.nodes0)
    cfg = resolve_config(cfg, strip)
    obs = _observer(cfg)
    try:
        result = run(cfg, strip, observer=obs)
    finally:
        if isinstance(obs, SeriesLogger):
            obs.close()

    outer0 = strip.contours[0].markers
    outer1 = result.state.patch.contours[0].markers
    if outer1.shape != outer0.shape:
        drift = float("inf")
    else:
        drift = float(np.hypot(*(outer1 - outer0).T).max())

    x1s = np.array([0.0, 0.25, 0.5, 0.6, 0.75, 0.9, 1.25, 1.5, 2.0, 2.5])
    x2s = np.linspace(-3.0, 3.0, 2)
    pts = np.array([(a, b) for a in x1s for b in x2s])
    u = velocity_from_contours(result.state.patch, pts)
    want = np.column_stack([np.zeros(len(pts)), strip_velocity_profile(pts[:, 0])])
    verr = float(np.abs(u - want).max())

    constants = {"outer_marker_drift": drift, "velocity_profile_error": verr}
    criteria = {
        "outer_marker_drift": _crit(drift, 1e-4, "<="),
        "velocity_profile": _crit(verr, 1e-3, "<="),
    }
    return _finish("steady-check", cfg, result.records, result.wall_series,
                   {}, constants, criteria, experiment_args={})


def _check_h(h: float) -> None:
    if not 0.0 < h <= 0.25:
        raise ConfigError(f"slit half-width h must lie in (0, 0.25], got {h}")


def rectangle_run(cfg: RunConfig, h: float, append=False) -> tuple[RunResult, RunConfig]:
    """Shared driver: near-strip rectangle with corner radius h/2.5."""
    _check_h(h)
    rect = make_rectangle(h, h / 2.5, cfg.nodes0)
    cfg = resolve_config(cfg, rect)
    obs = _observer(cfg, append)
    try:
        result = run(cfg, rect, observer=obs)
    finally:
        if isinstance(obs, SeriesLogger):
            obs.close()
    return result, cfg


def stability_experiment(cfg: RunConfig, h: float) -> ExperimentReport:
    result, cfg = rectangle_run(cfg, h)
    constants, criteria = stability_criteria(result.records)
    return _finish("stability", cfg, result.records, result.wall_series,
                   {}, constants, criteria, experiment_args={"h": h})


def perimeter_growth_experiment(cfg: RunConfig, h: float) -> ExperimentReport:
    result, cfg = rectangle_run(cfg, h)
    rates, criteria = perimeter_criteria(result.records, result.wall_series)
    ccon, ccrit = conservation_criteria(result.records)
    criteria.update(ccrit)
    return _finish("perimeter-growth", cfg, result.records, result.wall_series,
                   rates, ccon, criteria, experiment_args={"h": h})


def evaluate_rectangle_report(experiment: str, cfg: RunConfig, h: float,
                              records, wall_series) -> ExperimentReport:
    """Re-derive an ExperimentReport from stored series data (used by resume)."""
    wall = np.asarray(wall_series) if wall_series is not None else None
    if experiment == "stability":
        constants, criteria = stability_criteria(records)
        return _finish("stability", cfg, records, wall, {}, constants, criteria,
                       experiment_args={"h": h})
    if experiment == "perimeter-growth":
        rates, criteria = perimeter_criteria(records, wall)
        ccon, ccrit = conservation_criteria(records)
        criteria.update(ccrit)
        return _finish("perimeter-growth", cfg, records, wall, rates, ccon, criteria,
                       experiment_args={"h": h})
    raise ConfigError(f"cannot re-evaluate experiment {experiment!r}")


def velocity_gap_probe(state, samples: int = 200, seed: int = 0) -> dict:
    """sup over random points of |u2 - max(1 - x1, 0)|, with the symmetric
    difference area in square-root and fourth-root form for ratio tables."""
    patch = state.patch if isinstance(state, FlowState) else state
    rng = np.random.default_rng(seed)
    pts = np.column_stack([
        rng.uniform(0.0, 2.5, samples),
        rng.uniform(-np.pi, np.pi, samples),
    ])
    u = velocity_from_contours(patch, pts)
    gap = float(np.abs(u[:, 1] - strip_velocity_profile(pts[:, 0])).max())
    sd = sym_diff_functionals(patch, 1024)
    area = sd["area"]
    out = {"gap": gap, "symdiff_area": area,
           "sqrt_area": math.sqrt(area), "quarter_area": area ** 0.25}
    out["ratio_sqrt"] = gap / out["sqrt_area"] if area > 0 else 0.0
    out["ratio_quarter"] = gap / out["quarter_area"] if area > 0 else 0.0
    return out


# ---------------------------------------------------------------------------
# rearrangement property suite


def _random_field(rng, nx, ny, xmax) -> GridField:
    """Random nonnegative field with a zeroed last column: mixes smooth bumps,
    indicator blocks, and value ladders so sorting ties get exercised."""
    kind = rng.integers(0, 3)
    if kind == 0:
        vals = rng.random((nx, ny)) ** 2
    elif kind == 1:
        vals = np.zeros((nx, ny))
        for _ in range(rng.integers(1, 5)):
            i0, i1 = sorted(rng.integers(0, nx, 2))
            j0, j1 = sorted(rng.integers(0, ny, 2))
            vals[i0 : i1 + 1, j0 : j1 + 1] += rng.integers(1, 4)
    else:
        ladder = rng.integers(2, 6)
        vals = rng.integers(0, ladder, (nx, ny)).astype(np.float64)
    vals[-1] = 0.0
    if not vals.any():
        vals[0, 0] = 1.0
    return GridField(vals, xmax)


def _aligned_strip_field(nx, ny, xmax, lo, hi) -> GridField:
    f = GridField(np.zeros((nx, ny)), xmax)
    x1 = f.x1_centers
    vals = np.zeros((nx, ny))
    vals[(x1 > lo) & (x1 < hi), :] = 1.0
    return GridField(vals, xmax)


def rearrangement_suite(seed: int = 7, cases: int = 100) -> dict:
    """Property checks for the sorted-refill rearrangement; returns a report
    dict with one entry per check, each carrying value/threshold/pass."""
    rng = np.random.default_rng(seed)
    checks = {}

    worst = 0.0
    for _ in range(cases):
        nx = int(rng.integers(8, 40))
        ny = int(rng.integers(8, 48))
        f = _random_field(rng, nx, ny, xmax=float(rng.uniform(2.0, 6.0)))
        lhs, rhs = mp_gap(f)
        if rhs > 1e-12:
            worst = max(worst, lhs / rhs)
        else:
            worst = max(worst, 1.0 if lhs <= 1e-9 else np.inf)
    checks["mp_random_fields"] = _crit(worst, 1.05, "<=")

    # translated unit strip saturates the bound exactly on an aligned grid
    f = _aligned_strip_field(64, 48, 4.0, 1.0, 2.0)
    lhs, rhs = mp_gap(f)
    checks["mp_translated_strip"] = _crit(abs(lhs - rhs) / rhs, 0.02, "<=")
    checks["mp_translated_strip"]["lhs"] = lhs
    checks["mp_translated_strip"]["rhs"] = rhs

    # simple function with n = 4: three equal translated strips saturate
    # gap = [n / (8 pi (n-1))] * l1**2; strictly nested strips exceed it
    base = _aligned_strip_field(64, 48, 4.0, 1.0, 2.0)
    f4 = GridField(0.75 * base.values, 4.0)
    g4 = rearrange(f4)
    gap = impulse(f4) - impulse(g4)
    l1sq = l1_distance(f4, g4) ** 2
    bound = 4.0 / (8.0 * np.pi * 3.0) * l1sq
    checks["simple_function_factor"] = _crit(abs(gap - bound) / bound, 0.05, "<=")
    nest = _aligned_strip_field(64, 48, 4.0, 1.0, 2.0).values \
        + _aligned_strip_field(64, 48, 4.0, 1.125, 1.875).values \
        + _aligned_strip_field(64, 48, 4.0, 1.25, 1.75).values
    fn = GridField(nest / 4.0, 4.0)
    gn = rearrange(fn)
    gap_n = impulse(fn) - impulse(gn)
    bound_n = 4.0 / (8.0 * np.pi * 3.0) * l1_distance(fn, gn) ** 2
    checks["simple_function_nested"] = _crit(bound_n / gap_n if gap_n > 0 else np.inf, 1.0, "<=")

    worst_gap = 0.0
    for _ in range(cases):
        nx = int(rng.integers(8, 32))
        ny = int(rng.integers(8, 32))
        xmax = float(rng.uniform(2.0, 6.0))
        f = _random_field(rng, nx, ny, xmax)
        prof = np.sort(rng.random(nx))[::-1].copy()
        prof[-1] = 0.0
        g = StripProfile(prof, xmax)
        dstar, d = nonexpansivity_check(f, g)
        worst_gap = max(worst_gap, dstar - d)
    checks["nonexpansivity"] = _crit(worst_gap, 1e-12, "<=")

    exact = True
    for _ in range(cases):
        f = _random_field(rng, int(rng.integers(8, 24)), int(rng.integers(8, 24)),
                          float(rng.uniform(2.0, 6.0)))
        levels = np.unique(f.values)
        levels = levels[levels > 0]
        if levels.size == 0:
            continue
        alpha = float(rng.choice(levels))
        a = rearrange(cutoff(f, alpha))
        b = cutoff(rearrange(f), alpha)
        exact &= np.array_equal(a.values, b.values)
        for lv in levels:
            exact &= level_measure(f, float(lv)) == level_measure(rearrange(f), float(lv))
    checks["cutoff_commutation"] = _crit(0.0 if exact else 1.0, 0.0, "<=")

    idem = True
    for _ in range(20):
        f = _random_field(rng, 16, 16, 4.0)
        g = rearrange(f)
        idem &= np.array_equal(rearrange(g).values, g.values)
        # same multiset of cell values; the sum itself may re-round
        idem &= abs(mass(f) - mass(g)) <= 1e-12 * max(mass(f), 1.0)
        idem &= np.array_equal(np.sort(f.values, axis=None), np.sort(g.values, axis=None))
    checks["idempotence_and_mass"] = _crit(0.0 if idem else 1.0, 0.0, "<=")

    passed = all(c["pass"] for c in checks.values())
    return {"schema": 1, "experiment": "rearrange-test",
            "config": {"seed": seed, "cases": cases},
            "criteria": checks, "passed": passed}


# ---------------------------------------------------------------------------
# kernel identity table


def kernel_identity_table(seed: int = 0) -> list[dict]:
    """Spot values and symmetry residuals of the periodic kernel; each row is
    name/value/reference/error/tolerance/pass."""
    rng = np.random.default_rng(seed)
    rows = []

    def row(name, value, reference, tol):
        err = abs(value - reference)
        rows.append({"name": name, "value": float(value), "reference": float(reference),
                     "abs_err": float(err), "tol": tol, "pass": bool(err <= tol)})

    rows_in = [
        ("gamma(0,pi)", float(gamma_s(0.0, np.pi)), -math.log(2.0) / (4 * np.pi), 1e-14),
        ("gamma(10,0.3)+x1/4pi-ln2/4pi",
         float(gamma_s(10.0, 0.3)) + 10.0 / (4 * np.pi) - math.log(2.0) / (4 * np.pi), 0.0, 1e-5),
        ("gamma(20,0.7)+x1/4pi-ln2/4pi",
         float(gamma_s(20.0, 0.7)) + 20.0 / (4 * np.pi) - math.log(2.0) / (4 * np.pi), 0.0, 1e-8),
    ]
    for name, v, ref, tol in rows_in:
        row(name, v, ref, tol)

    kk = kernel_s(1.0, 0.0)
    row("K2(1,0)", float(kk[1]), -1.0 / (4 * np.pi * math.tanh(0.5)), 1e-14)
    row("K1(1,0)", float(kk[0]), 0.0, 1e-15)
    kk = kernel_s(20.0, 0.0)
    row("K2(20,0)+1/4pi", float(kk[1]) + 1.0 / (4 * np.pi), 0.0, 1e-8)

    # gradient consistency: K = (-d/dx2, +d/dx1) of gamma
    eps = 1e-6
    worst = 0.0
    for _ in range(20):
        d1 = rng.uniform(0.3, 3.0)
        d2 = rng.uniform(-2.5, 2.5)
        g1 = -(gamma_s(d1, d2 + eps) - gamma_s(d1, d2 - eps)) / (2 * eps)
        g2 = (gamma_s(d1 + eps, d2) - gamma_s(d1 - eps, d2)) / (2 * eps)
        kk = kernel_s(d1, d2)
        worst = max(worst, abs(float(kk[0]) - g1), abs(float(kk[1]) - g2))
    row("fd_gradient", worst, 0.0, 1e-6)

    # on the wall the image exactly cancels the normal component
    from .kernel import green_half, kernel_half

    worst_g = 0.0
    worst_k = 0.0
    for _ in range(50):
        x = np.array([0.0, rng.uniform(-np.pi, np.pi)])
        y = np.array([rng.uniform(0.05, 3.0), rng.uniform(-np.pi, np.pi)])
        worst_g = max(worst_g, abs(float(green_half(x, y))))
        worst_k = max(worst_k, abs(float(kernel_half(x, y)[0])))
    row("wall_green_zero", worst_g, 0.0, 1e-12)
    row("wall_kernel_normal_zero", worst_k, 0.0, 1e-12)

    return rows
