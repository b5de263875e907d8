"""Acceptance suite: the eight headline checks at their stated budgets.

Each criterion records one PASS/FAIL line, echoed in the terminal
summary by conftest. The full-budget h = 0.05 rectangle run is shared
by criteria 3, 4, 5, and 6; the h = 0.2 and h = 0.1 companions feed
criterion 6's ratio table. Expect ten to twenty minutes of wall time
on one core, dominated by the three T = 20 runs.
"""

import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import random_star_contour
from cylpatch.dynamics import RunConfig
from cylpatch.experiments import (
    conservation_criteria,
    fit_slope,
    kernel_identity_table,
    perimeter_criteria,
    rearrangement_suite,
    rectangle_run,
    stability_criteria,
)
from cylpatch.geometry import (
    Patch,
    apply_shear,
    make_cover_strip,
    make_strip,
    patch_area,
    patch_impulse,
    rasterize_patch,
    vertical_center,
)
from cylpatch.kernel import velocity_from_contours, velocity_from_grid

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def big_run(tmp_path_factory):
    """h = 0.05 rectangle at the full acceptance budget, outputs kept."""
    out = tmp_path_factory.mktemp("rect005")
    cfg = RunConfig(dt=0.04, t_end=20.0, nodes0=512, output_every=10,
                    raster_res=4096, out_dir=str(out))
    t0 = time.perf_counter()
    result, cfg = rectangle_run(cfg, 0.05)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(result=result, cfg=cfg, elapsed=elapsed)


@pytest.fixture(scope="session")
def side_runs():
    """h = 0.2 and h = 0.1 companions at a reduced node budget."""
    out = {}
    for h in (0.2, 0.1):
        cfg = RunConfig(dt=0.04, t_end=20.0, nodes0=256, output_every=10,
                        raster_res=2048)
        result, _ = rectangle_run(cfg, h)
        constants, criteria = stability_criteria(result.records)
        out[h] = SimpleNamespace(constants=constants, criteria=criteria)
    return out


def test_criterion_1_strip_velocity_law(acceptance_log):
    t0 = time.perf_counter()
    strip = make_strip(512)
    x1s = np.array([0.0, 0.25, 0.5, 0.6, 0.75, 0.9, 1.25, 1.5, 2.0, 2.5])
    pts = np.array([(a, b) for a in x1s for b in (-2.0, 1.3)])
    assert len(pts) == 20
    u = velocity_from_contours(strip, pts)
    want = np.column_stack([np.zeros(20), np.maximum(1.0 - pts[:, 0], 0.0)])
    err = float(np.abs(u - want).max())
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-3 and elapsed < 5.0
    acceptance_log(f"criterion 1 {'PASS' if ok else 'FAIL'}  strip velocity law: "
                   f"sup error {err:.2e} (tol 1e-3) at 512 nodes, 20 points, "
                   f"{elapsed:.2f} s (budget 5 s)")
    assert err <= 1e-3
    assert elapsed < 5.0


def test_criterion_2_strip_mass_and_moments(acceptance_log):
    strip = make_strip(512)
    mass_err = abs(patch_area(strip) - TWO_PI)
    imp_err = abs(patch_impulse(strip) - math.pi)
    k_err = abs(vertical_center(strip))
    worst = max(mass_err, imp_err, k_err)
    ok = worst <= 1e-6
    acceptance_log(f"criterion 2 {'PASS' if ok else 'FAIL'}  strip functionals: "
                   f"|mass-2pi| {mass_err:.1e}, |impulse-pi| {imp_err:.1e}, "
                   f"|k| {k_err:.1e} (tol 1e-6 each)")
    assert worst <= 1e-6


def test_criterion_3_center_rate(acceptance_log, big_run):
    worst = 0.0
    for t in (1.0, 4.0, 10.0):
        cell = apply_shear(make_cover_strip(256), t)
        worst = max(worst, abs(vertical_center(cell) - 0.5 * t))
    records = big_run.result.records
    slope = fit_slope([r.t for r in records], [r.k for r in records])
    ok = worst <= 1e-10 and 0.4 <= slope <= 0.6
    acceptance_log(f"criterion 3 {'PASS' if ok else 'FAIL'}  center rate: analytic "
                   f"|k - t/2| {worst:.1e} (tol 1e-10); simulated k-slope "
                   f"{slope:.4f} (window [0.4, 0.6], h=0.05, T=20)")
    assert worst <= 1e-10
    assert 0.4 <= slope <= 0.6


def test_criterion_4_conservation(acceptance_log, big_run):
    constants, criteria = conservation_criteria(big_run.result.records)
    ok = all(c["pass"] for c in criteria.values()) and big_run.elapsed <= 900.0
    acceptance_log(f"criterion 4 {'PASS' if ok else 'FAIL'}  conservation over T=20: "
                   f"mass drift {constants['mass_drift']:.2e} (tol 5e-3), impulse "
                   f"{constants['impulse_drift']:.2e} (tol 1e-2), weighted symdiff "
                   f"{constants['wsymdiff_drift']:.2e} (tol 2e-2); run took "
                   f"{big_run.elapsed:.0f} s (budget 900 s)")
    for name, c in criteria.items():
        assert c["pass"], f"{name}: {c['value']} vs {c['threshold']}"
    assert big_run.elapsed <= 900.0


def test_criterion_5_perimeter_growth(acceptance_log, big_run):
    rates, criteria = perimeter_criteria(big_run.result.records,
                                         big_run.result.wall_series)
    names = ("perimeter_growth", "wall_height", "separation")
    ok = all(criteria[n]["pass"] for n in names)
    acceptance_log(f"criterion 5 {'PASS' if ok else 'FAIL'}  perimeter growth: "
                   f"min (P-P0)/t {criteria['perimeter_growth']['value']:.3f} "
                   f"(>= 0.25), min wall/t {criteria['wall_height']['value']:.3f} "
                   f"(>= 0.5), min (wall-k)/t {criteria['separation']['value']:.3f} "
                   f"(>= 0.25); fitted P slope {rates['perimeter_slope']:.3f}, "
                   f"wall slope {rates['wall_slope']:.3f}")
    for n in names:
        c = criteria[n]
        assert c["pass"], f"{n}: {c['value']} vs {c['threshold']}"


def test_criterion_6_j1_stability(acceptance_log, big_run, side_runs):
    constants, criteria = stability_criteria(big_run.result.records)
    rhos = {0.05: constants["rho"],
            0.1: side_runs[0.1].constants["rho"],
            0.2: side_runs[0.2].constants["rho"]}
    flat = criteria["sup_flat_last_half"]
    ok = (all(r <= 20.0 for r in rhos.values()) and flat["pass"]
          and rhos[0.2] / rhos[0.1] <= 3.0 and rhos[0.1] / rhos[0.2] <= 3.0
          and rhos[0.1] / rhos[0.05] <= 3.0 and rhos[0.05] / rhos[0.1] <= 3.0)
    acceptance_log(f"criterion 6 {'PASS' if ok else 'FAIL'}  J1 stability: rho = "
                   f"{rhos[0.2]:.3f} (h=0.2), {rhos[0.1]:.3f} (h=0.1), "
                   f"{rhos[0.05]:.3f} (h=0.05), each <= 20; last-half sup growth "
                   f"{constants['last_half_sup_growth']:.2%} (tol 5%) on h=0.05")
    assert criteria["stability_ratio"]["pass"]
    assert flat["pass"]
    for h, rho in rhos.items():
        assert rho <= 20.0, f"h={h}: rho {rho}"
    # halving h moves the ratio by less than a factor 3
    assert max(rhos[0.2] / rhos[0.1], rhos[0.1] / rhos[0.2]) <= 3.0
    assert max(rhos[0.1] / rhos[0.05], rhos[0.05] / rhos[0.1]) <= 3.0


def test_criterion_7_rearrangement_suite(acceptance_log):
    t0 = time.perf_counter()
    out = rearrangement_suite(seed=7, cases=100)
    elapsed = time.perf_counter() - t0
    ok = out["passed"] and elapsed < 30.0
    worst_mp = out["criteria"]["mp_random_fields"]["value"]
    strip_rel = out["criteria"]["mp_translated_strip"]["value"]
    acceptance_log(f"criterion 7 {'PASS' if ok else 'FAIL'}  rearrangement suite: "
                   f"worst MP ratio {worst_mp:.4f} (<= 1.05) on 100 fields, "
                   f"translated-strip mismatch {strip_rel:.2%} (<= 2%), "
                   f"{elapsed:.1f} s (budget 30 s)")
    assert out["passed"], {k: v for k, v in out["criteria"].items() if not v["pass"]}
    assert elapsed < 30.0


def test_criterion_8_kernel_identities(acceptance_log):
    t0 = time.perf_counter()
    rows = kernel_identity_table(seed=0)
    table_ok = all(r["pass"] for r in rows)

    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(2):
        c = random_star_contour(rng)
        patch = Patch((c,), "star")
        field = rasterize_patch(patch, 1024, 1024, 5.0)
        pts = []
        while len(pts) < 10:
            q = np.array([rng.uniform(0.05, 4.2), rng.uniform(-np.pi, np.pi)])
            d2 = np.abs(c.markers[:, 1] - q[1])
            d2 = np.minimum(d2, 2 * np.pi - d2)
            if np.hypot(c.markers[:, 0] - q[0], d2).min() > 0.25:
                pts.append(q)
        pts = np.array(pts)
        u_c = velocity_from_contours(patch, pts)
        u_g = velocity_from_grid(field, pts)
        worst = max(worst, float(np.abs(u_c - u_g).max()))
    elapsed = time.perf_counter() - t0
    ok = table_ok and worst <= 5e-3 and elapsed < 60.0
    acceptance_log(f"criterion 8 {'PASS' if ok else 'FAIL'}  kernel identities: "
                   f"{len(rows)} spot/symmetry rows all pass, contour-vs-grid "
                   f"oracle {worst:.2e} (tol 5e-3), {elapsed:.1f} s (budget 60 s)")
    for r in rows:
        assert r["pass"], f"{r['name']}: {r['abs_err']} > {r['tol']}"
    assert worst <= 5e-3
    assert elapsed < 60.0
