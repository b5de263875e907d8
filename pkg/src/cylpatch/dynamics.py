"""Time integration of marker curves under their self-induced velocity.

Markers live in the universal cover and are advanced all together by
classical fixed-step RK4; every stage evaluates the boundary-integral
velocity of the stage patch at every marker. Markers are never wrapped
into the fundamental domain: the velocity is 2 pi periodic, so cover
evaluation is automatic, and cover quantities (perimeter, vertical
center) stay single-valued and smooth in time.

Stretching boundaries are kept resolved by remeshing after each step:
where adjacent spacing exceeds dmax a node is inserted at the local
cubic (Catmull-Rom) midpoint, and where spacing stays below dmin for
three or more consecutive pairs alternate nodes are deleted. Remeshing
must not change any contour area by more than 1e-4 (relative, with an
absolute floor of 1e-4 for zero-area wall circles); violations raise.

Runs are deterministic functions of the configuration: fixed dt, no
randomness, sequential reductions. A checkpoint (contour CSV plus JSON
sidecar with t, step count, and a config hash) is written at every
output step; resuming from one reproduces the remaining series bitwise.

Markers that start exactly on the wall stay there: their horizontal
velocity cancels by image symmetry, and the integrator snaps the
residual rounding dust (monitored against a 1e-9 per-step budget) back
onto x1 = 0. The rectangle's tracked wall node (0, 0) is therefore a
marker whose index is carried through remesh index shifts, never
deleted.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    AreaDistortionError,
    BlowupError,
    CheckpointError,
    ConfigError,
    CylpatchError,
    GeometryError,
)
from .geometry import (
    Contour,
    Patch,
    load_patch,
    marker_gaps,
    patch_perimeter,
    polygon_area,
    save_patch,
)
from .kernel import velocity_from_contours

TWO_PI = 2.0 * np.pi

__all__ = [
    "RunConfig",
    "FlowState",
    "RemeshStats",
    "RunResult",
    "resolve_config",
    "config_hash",
    "step",
    "remesh",
    "run",
    "save_checkpoint",
    "load_checkpoint",
    "latest_checkpoint",
    "resume_state",
    "read_wall_series",
    "truncate_wall_series",
    "WALL_FILE",
]


@dataclass(frozen=True)
class RunConfig:
    """Fixed-step solver settings.

    dmax = 0 means: resolve to initial perimeter / nodes0 when the run
    starts (see resolve_config). dmin is dmin_factor * dmax.
    """

    dt: float = 0.025
    t_end: float = 20.0
    nodes0: int = 512
    dmax: float = 0.0
    dmin_factor: float = 0.25
    output_every: int = 10
    raster_res: int = 2048
    speed_limit: float = 100.0
    area_tol: float = 1e-4
    max_remesh_passes: int = 8
    out_dir: str | None = None

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0.0:
            raise ConfigError(f"t_end must be nonnegative, got {self.t_end}")
        if self.nodes0 < 64:
            raise ConfigError(f"nodes0 must be >= 64, got {self.nodes0}")
        if self.dmax < 0.0:
            raise ConfigError(f"dmax must be >= 0, got {self.dmax}")
        if not 0.0 < self.dmin_factor < 1.0:
            raise ConfigError(f"dmin_factor must be in (0, 1), got {self.dmin_factor}")
        if self.output_every < 1:
            raise ConfigError(f"output_every must be >= 1, got {self.output_every}")
        if self.raster_res < 128:
            raise ConfigError(f"raster_res must be >= 128, got {self.raster_res}")
        if not self.speed_limit > 0.0:
            raise ConfigError(f"speed_limit must be positive, got {self.speed_limit}")

    @property
    def dmin(self) -> float:
        return self.dmin_factor * self.dmax


def resolve_config(cfg: RunConfig, initial: Patch) -> RunConfig:
    """Fill the derived dmax from the initial patch if it was left at 0."""
    if cfg.dmax > 0.0:
        return cfg
    return dataclasses.replace(cfg, dmax=patch_perimeter(initial) / cfg.nodes0)


def config_hash(cfg: RunConfig) -> str:
    """Hash of the fields that determine the numerical trajectory.

    t_end and out_dir are excluded: a resumed run may extend the horizon
    or live in a different directory and still continue bitwise.
    """
    fields = {
        "dt": cfg.dt,
        "nodes0": cfg.nodes0,
        "dmax": cfg.dmax,
        "dmin_factor": cfg.dmin_factor,
        "output_every": cfg.output_every,
        "raster_res": cfg.raster_res,
        "speed_limit": cfg.speed_limit,
        "area_tol": cfg.area_tol,
        "max_remesh_passes": cfg.max_remesh_passes,
    }
    blob = json.dumps(fields, sort_keys=True).encode("ascii")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FlowState:
    """Patch markers at time t, plus the tracked wall node (ci, mi) if any."""

    t: float
    step_count: int
    patch: Patch
    wall_node: tuple[int, int] | None = None

    def wall_marker(self) -> np.ndarray | None:
        if self.wall_node is None:
            return None
        ci, mi = self.wall_node
        return self.patch.contours[ci].markers[mi].copy()


def initial_state(patch: Patch) -> FlowState:
    """State at t = 0; tracks the marker sitting exactly at (0, 0) if present."""
    wall_node = None
    for ci, c in enumerate(patch.contours):
        if c.wrap != 0:
            continue  # winding circles slide; their nodes are not material points of interest
        hit = np.nonzero((c.markers[:, 0] == 0.0) & (c.markers[:, 1] == 0.0))[0]
        if hit.size:
            wall_node = (ci, int(hit[0]))
            break
    return FlowState(0.0, 0, patch, wall_node)


def _stage_velocity(contours, markers_flat, sizes, cfg, t):
    """Velocity of the stage patch at all its markers; guards the speed limit."""
    stage = []
    pos = 0
    for c, n in zip(contours, sizes):
        stage.append(c.with_markers(markers_flat[pos : pos + n]))
        pos += n
    u = velocity_from_contours(stage, markers_flat)
    vmax = float(np.hypot(u[:, 0], u[:, 1]).max())
    if vmax > cfg.speed_limit:
        raise BlowupError(f"stage speed {vmax:.3g} exceeds limit {cfg.speed_limit} at t = {t:.6g}")
    return u


def step(state: FlowState, cfg: RunConfig, dt: float | None = None) -> FlowState:
    """One RK4 step of all markers. dt = 0 returns the state unchanged."""
    if dt is None:
        dt = cfg.dt
    if dt == 0.0:
        return state
    contours = state.patch.contours
    sizes = [c.n for c in contours]
    p0 = np.vstack([c.markers for c in contours])
    on_wall = p0[:, 0] == 0.0

    def stage(p):
        # markers on the wall stay on it through intermediate stages as well;
        # their computed x1 velocity is image-cancellation roundoff
        p[on_wall, 0] = 0.0
        return _stage_velocity(contours, p, sizes, cfg, state.t)

    k1 = stage(p0.copy())
    k2 = stage(p0 + (0.5 * dt) * k1)
    k3 = stage(p0 + (0.5 * dt) * k2)
    k4 = stage(p0 + dt * k3)
    p1 = p0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    drift = np.abs(p1[on_wall, 0])
    if drift.size and drift.max() > 1e-9 * max(dt, 1.0):
        raise GeometryError(f"wall marker drifted to x1 = {drift.max():.3g} in one step")
    p1[on_wall, 0] = 0.0

    out = []
    pos = 0
    for c, n in zip(contours, sizes):
        out.append(c.with_markers(p1[pos : pos + n]))
        pos += n
    return FlowState(state.t + dt, state.step_count + 1, state.patch.with_contours(out), state.wall_node)


@dataclass(frozen=True)
class RemeshStats:
    inserted: int
    deleted: int
    max_area_shift: float


def _insert_long_edges(m: np.ndarray, wrap: int, dmax: float, protect: int):
    """One insertion pass: Catmull-Rom midpoints on every edge longer than dmax.

    Returns (markers, inserted_count, new_protect_index).
    """
    n = m.shape[0]
    d = np.roll(m, -1, axis=0) - m
    d[-1, 1] += TWO_PI * wrap
    gaps = np.hypot(d[:, 0], d[:, 1])
    long = np.nonzero(gaps > dmax)[0]
    if long.size == 0:
        return m, 0, protect
    off = np.array([0.0, TWO_PI * wrap])
    prev = np.roll(m, 1, axis=0)
    prev[0] -= off
    nxt = np.roll(m, -1, axis=0)
    nxt[-1] += off
    nxt2 = np.roll(m, -2, axis=0)
    nxt2[-2:] += off
    mids = (-prev + 9.0 * m + 9.0 * nxt - nxt2) / 16.0
    # wall edges are straight; cubic interpolation across the corner would
    # overshoot through the wall
    on_wall = (m[:, 0] == 0.0) & (nxt[:, 0] == 0.0)
    mids[on_wall] = 0.5 * (m[on_wall] + nxt[on_wall])
    mids[:, 0] = np.maximum(mids[:, 0], 0.0)
    out = np.insert(m, long + 1, mids[long], axis=0)
    if protect >= 0:
        protect += int(np.count_nonzero(long < protect))
    return out, long.size, protect


def _delete_short_runs(m: np.ndarray, wrap: int, dmin: float, protect: int):
    """Delete alternate interior nodes of runs of 3+ consecutive short gaps."""
    n = m.shape[0]
    if n < 8:
        return m, 0, protect
    d = np.roll(m, -1, axis=0) - m
    d[-1, 1] += TWO_PI * wrap
    short = np.hypot(d[:, 0], d[:, 1]) < dmin  # gap i sits between nodes i and i+1
    if not short.any():
        return m, 0, protect
    kill = np.zeros(n, dtype=bool)
    if short.all():
        kill[1::2] = True  # uniform compression: thin every other node
    else:
        # walk circular runs starting after a non-short gap
        start = int(np.nonzero(~short)[0][0])
        i = start
        count = 0
        while count < n:
            if short[i % n]:
                j = i
                while short[j % n] and j - i < n:
                    j += 1
                run_len = j - i
                if run_len >= 3:
                    # interior chain nodes are i+1 .. j (mod n); drop every other
                    for kq in range(i + 1, j + 1, 2):
                        kill[kq % n] = True
                count += run_len
                i = j
            else:
                count += 1
                i += 1
    if protect >= 0:
        kill[protect] = False
    if n - int(kill.sum()) < 8:
        return m, 0, protect
    keep = ~kill
    out = m[keep]
    new_protect = protect
    if protect >= 0:
        new_protect = int(keep[:protect].sum())
    return out, int(kill.sum()), new_protect


def remesh(state: FlowState, cfg: RunConfig) -> tuple[FlowState, RemeshStats]:
    """Spacing maintenance; asserts area preservation per contour."""
    if not cfg.dmax > 0.0:
        raise ConfigError("remesh needs a resolved dmax (see resolve_config)")
    dmin = cfg.dmin
    inserted = 0
    deleted = 0
    max_shift = 0.0
    out = []
    wall_node = state.wall_node
    for ci, c in enumerate(state.patch.contours):
        protect = wall_node[1] if wall_node is not None and wall_node[0] == ci else -1
        m = c.markers
        area0 = polygon_area(c)
        for _ in range(cfg.max_remesh_passes):
            m2, k, protect = _insert_long_edges(m, c.wrap, cfg.dmax, protect)
            inserted += k
            m = m2
            if k == 0:
                break
        m, k, protect = _delete_short_runs(m, c.wrap, dmin, protect)
        deleted += k
        c2 = c.with_markers(m)
        shift = abs(polygon_area(c2) - area0)
        rel = shift / max(abs(area0), 1.0)
        max_shift = max(max_shift, rel)
        if rel > cfg.area_tol:
            raise AreaDistortionError(
                f"remesh moved contour {ci} area by {rel:.3g} (tolerance {cfg.area_tol})"
            )
        out.append(c2)
        if wall_node is not None and wall_node[0] == ci:
            wall_node = (ci, protect)
    new_patch = state.patch.with_contours(out)
    return FlowState(state.t, state.step_count, new_patch, wall_node), RemeshStats(
        inserted, deleted, max_shift
    )


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(state: FlowState, cfg: RunConfig, out_dir: str) -> str:
    path = os.path.join(out_dir, f"checkpoint_{state.step_count:06d}.csv")
    save_patch(state.patch, path)
    side = {
        "schema": 1,
        "t": state.t,
        "step_count": state.step_count,
        "cfg_hash": config_hash(cfg),
        "wall_node": list(state.wall_node) if state.wall_node else None,
    }
    with open(path[:-4] + ".json", "w", encoding="ascii") as fh:
        json.dump(side, fh)
    return path


def load_checkpoint(csv_path: str) -> tuple[FlowState, dict]:
    side_path = csv_path[:-4] + ".json"
    if not os.path.exists(csv_path) or not os.path.exists(side_path):
        raise CheckpointError(f"checkpoint pair missing at {csv_path}")
    patch = load_patch(csv_path)
    with open(side_path, "r", encoding="ascii") as fh:
        side = json.load(fh)
    wall = side.get("wall_node")
    state = FlowState(
        float(side["t"]), int(side["step_count"]), patch, tuple(wall) if wall else None
    )
    return state, side


def latest_checkpoint(out_dir: str) -> str:
    pat = re.compile(r"^checkpoint_(\d{6})\.csv$")
    best = None
    for name in os.listdir(out_dir):
        mt = pat.match(name)
        if mt and (best is None or int(mt.group(1)) > best[0]):
            best = (int(mt.group(1)), name)
    if best is None:
        raise CheckpointError(f"no checkpoints in {out_dir}")
    return os.path.join(out_dir, best[1])


def resume_state(out_dir: str, cfg: RunConfig) -> FlowState:
    """Latest checkpoint of a run directory, verified against this config."""
    state, side = load_checkpoint(latest_checkpoint(out_dir))
    want = config_hash(cfg)
    if side.get("cfg_hash") != want:
        raise CheckpointError(
            f"checkpoint written with config {side.get('cfg_hash')}, resume requested {want}"
        )
    return state


# ---------------------------------------------------------------------------
# run loop


@dataclass
class RunResult:
    state: FlowState
    records: list
    wall_series: np.ndarray | None  # columns: t, tracked x2, min marker x2
    aborted: str | None = None


def _wall_row(state: FlowState) -> list[float] | None:
    wm = state.wall_marker()
    if wm is None:
        return None
    low = min(float(c.markers[:, 1].min()) for c in state.patch.contours)
    return [state.t, float(wm[1]), low]


WALL_FILE = "wall.csv"
_WALL_HEADER = "t,x2,minx2"


def read_wall_series(out_dir: str) -> np.ndarray | None:
    path = os.path.join(out_dir, WALL_FILE)
    if not os.path.exists(path):
        return None
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows if rows.size else None


def truncate_wall_series(out_dir: str, t_max: float) -> None:
    rows = read_wall_series(out_dir)
    if rows is None:
        return
    rows = rows[rows[:, 0] <= t_max + 1e-9]
    path = os.path.join(out_dir, WALL_FILE)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_WALL_HEADER + "\n")
        for r in rows:
            fh.write("%.12g,%.12g,%.12g\n" % tuple(r))


def run(
    cfg: RunConfig,
    initial: Patch | None = None,
    *,
    state: FlowState | None = None,
    observer=None,
    emit_initial: bool = True,
) -> RunResult:
    """Step + remesh loop to t_end, emitting diagnostics every output_every steps.

    Exactly one of ``initial`` (fresh run from a patch at t = 0) and
    ``state`` (continuation, e.g. from a checkpoint) must be given; for a
    continuation nothing is emitted at the starting step, which is
    already covered by the interrupted run's series. ``observer`` is
    called on the state at every output step; its return values are
    collected into RunResult.records. When cfg.out_dir is set, a contour
    checkpoint accompanies every output step and a failure manifest is
    written if the run aborts.
    """
    if (initial is None) == (state is None):
        raise ConfigError("run() needs exactly one of initial= or state=")
    if initial is not None:
        cfg = resolve_config(cfg, initial)
        state = initial_state(initial)
    elif not cfg.dmax > 0.0:
        raise ConfigError("continuation runs need an explicitly resolved dmax")

    n_steps = int(round(cfg.t_end / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_end) > 1e-9:
        raise ConfigError(f"t_end = {cfg.t_end} is not an integer number of dt = {cfg.dt} steps")
    if state.step_count > n_steps:
        raise ConfigError(f"state is already past t_end (step {state.step_count} of {n_steps})")

    out_dir = cfg.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    records = []
    wall_rows = []
    wall_fh = None
    if out_dir and state.wall_node is not None:
        path = os.path.join(out_dir, WALL_FILE)
        fresh = initial is not None or not os.path.exists(path)
        wall_fh = open(path, "w" if fresh else "a", encoding="ascii")
        if fresh:
            wall_fh.write(_WALL_HEADER + "\n")
            wall_fh.flush()

    def emit(st: FlowState):
        if observer is not None:
            records.append(observer(st))
        row = _wall_row(st)
        if row is not None:
            wall_rows.append(row)
            if wall_fh is not None:
                wall_fh.write("%.12g,%.12g,%.12g\n" % tuple(row))
                wall_fh.flush()
        if out_dir:
            save_checkpoint(st, cfg, out_dir)

    try:
        if emit_initial and initial is not None:
            emit(state)
        for k in range(state.step_count + 1, n_steps + 1):
            state = step(state, cfg)
            state, _ = remesh(state, cfg)
            if k % cfg.output_every == 0 or k == n_steps:
                emit(state)
    except CylpatchError as exc:
        if out_dir:
            manifest = {
                "reason": type(exc).__name__,
                "message": str(exc),
                "t": state.t,
                "step_count": state.step_count,
            }
            with open(os.path.join(out_dir, "failure.json"), "w", encoding="ascii") as fh:
                json.dump(manifest, fh, indent=1)
        raise
    finally:
        if wall_fh is not None:
            wall_fh.close()

    wall = np.array(wall_rows) if wall_rows else None
    return RunResult(state=state, records=records, wall_series=wall)
