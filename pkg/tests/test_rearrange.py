"""Grid fields, decreasing rearrangement, and its inequality battery."""

import os

import numpy as np
import pytest

from cylpatch import (
    GridField,
    GridMismatchError,
    StripProfile,
    column_profile,
    cutoff,
    impulse,
    j1_distance,
    l1_distance,
    level_measure,
    load_field,
    mass,
    mp_gap,
    nonexpansivity_check,
    rearrange,
    save_field,
)

TWO_PI = 2.0 * np.pi


def random_field(rng, nx=48, ny=40, xmax=4.0):
    v = rng.random((nx, ny)) ** 2
    v[-1, :] = 0.0
    return GridField(v, xmax)


def indicator_strip(lo, hi, nx=256, ny=32, xmax=4.0):
    """1_{lo < x1 < hi} sampled on cell centers; exact when lo, hi are grid lines."""
    x1 = (np.arange(nx) + 0.5) * (xmax / nx)
    col = ((x1 > lo) & (x1 < hi)).astype(np.float64)
    return GridField(np.repeat(col[:, None], ny, axis=1), xmax)


class TestGridField:
    def test_validation(self):
        with pytest.raises(GridMismatchError):
            GridField(np.ones((4, 4)), 2.0)  # support touches truncation
        bad = np.zeros((4, 4))
        bad[0, 0] = -1.0
        with pytest.raises(GridMismatchError):
            GridField(bad, 2.0)
        nan = np.zeros((4, 4))
        nan[1, 1] = np.nan
        with pytest.raises(GridMismatchError):
            GridField(nan, 2.0)
        with pytest.raises(GridMismatchError):
            GridField(np.zeros((4, 4)), -1.0)
        with pytest.raises(GridMismatchError):
            GridField(np.zeros(4), 2.0)

    def test_cell_geometry(self):
        f = GridField(np.zeros((8, 5)), 2.0)
        assert f.nx == 8 and f.ny == 5
        assert abs(f.cell_area - 0.25 * TWO_PI / 5) < 1e-15
        assert abs(f.x1_centers[0] - 0.125) < 1e-15
        assert abs(f.x2_centers[0] - (-np.pi + 0.1 * TWO_PI)) < 1e-12

    def test_mass_impulse_of_strip(self):
        f = indicator_strip(0.0, 1.0)
        assert abs(mass(f) - TWO_PI) < 1e-12
        assert abs(impulse(f) - np.pi) < 1e-12
        g = indicator_strip(1.0, 2.0)
        assert abs(impulse(g) - 3 * np.pi) < 1e-12


class TestLevelMeasure:
    def test_indicator(self):
        f = indicator_strip(1.0, 2.0)
        assert abs(level_measure(f, 0.5) - TWO_PI) < 1e-12
        assert level_measure(f, 1.0) == 0.0  # strict super-level

    def test_alpha_domain(self):
        f = indicator_strip(1.0, 2.0)
        with pytest.raises(ValueError):
            level_measure(f, 0.0)
        with pytest.raises(ValueError):
            level_measure(f, -1.0)

    def test_preserved_by_rearrange(self):
        rng = np.random.default_rng(11)
        f = random_field(rng)
        for alpha in (0.05, 0.3, 0.8):
            assert level_measure(f, alpha) == level_measure(rearrange(f), alpha)


class TestRearrange:
    def test_multiset_bitwise(self):
        rng = np.random.default_rng(0)
        f = random_field(rng)
        fs = rearrange(f)
        assert np.array_equal(np.sort(f.values, axis=None), np.sort(fs.values, axis=None))

    def test_idempotent_bitwise(self):
        rng = np.random.default_rng(1)
        fs = rearrange(random_field(rng))
        assert np.array_equal(rearrange(fs).values, fs.values)

    def test_mass_preserved(self):
        rng = np.random.default_rng(2)
        f = random_field(rng)
        assert abs(mass(rearrange(f)) - mass(f)) <= 1e-12 * mass(f)

    def test_column_monotone(self):
        rng = np.random.default_rng(3)
        fs = rearrange(random_field(rng))
        cols = fs.values.mean(axis=1)
        assert np.all(np.diff(cols) <= 1e-12)

    def test_strip_fill(self):
        # translated indicator strip comes back as the wall strip, cellwise
        f = indicator_strip(1.0, 2.0)
        assert np.array_equal(rearrange(f).values, indicator_strip(0.0, 1.0).values)

    def test_fixed_point(self):
        prof = StripProfile(np.array([3.0, 2.0, 1.0, 0.5, 0.0, 0.0]), 3.0)
        f = prof.to_grid(48, 16, 3.0)
        assert np.array_equal(rearrange(f).values, f.values)

    def test_impulse_never_increases(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            f = random_field(rng, nx=24, ny=20)
            assert impulse(rearrange(f)) <= impulse(f) + 1e-12


class TestCutoff:
    def test_commutes_with_rearrange(self):
        rng = np.random.default_rng(5)
        f = random_field(rng)
        for alpha in (0.1, 0.4, 0.9):
            a = cutoff(rearrange(f), alpha)
            b = rearrange(cutoff(f, alpha))
            assert np.array_equal(a.values, b.values)

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            cutoff(indicator_strip(0.0, 1.0), 0.0)


class TestMpGap:
    def test_translated_strip_equality(self):
        f = indicator_strip(1.0, 2.0)
        lhs, rhs = mp_gap(f)
        exact = 16 * np.pi ** 2
        assert abs(lhs - exact) < 1e-9
        assert abs(rhs - exact) < 1e-9
        assert abs(lhs - rhs) <= 0.02 * rhs

    def test_inequality_random(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(50):
            f = random_field(rng, nx=32, ny=24)
            lhs, rhs = mp_gap(f)
            if rhs > 0:
                worst = max(worst, lhs / rhs)
            else:
                assert lhs <= 1e-12
        assert worst <= 1.05

    def test_zero_field_rejected(self):
        with pytest.raises(ValueError):
            mp_gap(GridField(np.zeros((4, 4)), 2.0))


class TestSimpleFunctionBound:
    """Gap bound for n-level simple functions, factor n / (8 pi (n-1))."""

    N = 4

    def bound(self, f):
        lhs_sq = l1_distance(f, rearrange(f)) ** 2
        return self.N / (8 * np.pi * (self.N - 1)) * lhs_sq

    def gap(self, f):
        return impulse(f) - impulse(rearrange(f))

    def test_equal_strips_saturate(self):
        # (3/4) 1_{1<x1<2}: all three level sets coincide; bound is met exactly
        f = indicator_strip(1.0, 2.0)
        f = GridField(0.75 * f.values, f.xmax)
        g = self.gap(f)
        assert abs(g - 1.5 * np.pi) < 1e-10
        assert abs(self.bound(f) - g) <= 0.05 * g

    def test_nested_strips_obey_bound(self):
        # strictly nested level sets: inequality strict, bound below gap
        nx, ny, xmax = 256, 16, 4.0
        x1 = (np.arange(nx) + 0.5) * (xmax / nx)
        col = ((x1 > 0.5) & (x1 < 3.0)).astype(float)
        col += ((x1 > 1.0) & (x1 < 2.5)).astype(float)
        col += ((x1 > 1.5) & (x1 < 2.0)).astype(float)
        f = GridField(np.repeat((col / self.N)[:, None], ny, axis=1), xmax)
        b, g = self.bound(f), self.gap(f)
        assert g > 0
        assert b <= g * (1 + 1e-12)


class TestNonexpansivity:
    def test_random_against_profiles(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            f = random_field(rng, nx=40, ny=30)
            raw = np.sort(rng.random(40))[::-1]
            raw[-8:] = 0.0
            prof = StripProfile(raw, 4.0)
            lhs, rhs = nonexpansivity_check(f, prof)
            assert lhs <= rhs + 1e-12


class TestStripProfile:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            StripProfile(np.array([1.0, 2.0, 0.0]), 3.0)

    def test_bounds_derived_and_checked(self):
        p = StripProfile(np.array([2.0, 1.0, 0.0, 0.0]), 4.0)
        assert p.support_bound == 2.0
        assert p.height_bound == 2.0
        with pytest.raises(ValueError):
            StripProfile(np.array([2.0, 1.0, 0.0, 0.0]), 4.0, support_bound=1.0)
        with pytest.raises(ValueError):
            StripProfile(np.array([2.0, 1.0, 0.0, 0.0]), 4.0, height_bound=1.5)

    def test_sampling(self):
        p = StripProfile(np.array([3.0, 1.0, 0.0]), 3.0)
        x = np.array([-0.5, 0.2, 1.7, 2.5, 5.0])
        assert np.array_equal(p.sample(x), np.array([0.0, 3.0, 1.0, 0.0, 0.0]))

    def test_to_grid_round_trip(self):
        p = StripProfile(np.array([2.0, 1.5, 0.5, 0.0]), 4.0)
        f = p.to_grid(8, 6, 4.0)
        assert np.array_equal(f.values[:, 0], p.sample(f.x1_centers))
        q = StripProfile(np.array([1.0, 1.0]), 2.0)
        with pytest.raises(GridMismatchError):
            q.to_grid(8, 6, 2.0)  # support reaches the truncation column

    def test_column_profile_monotone(self):
        rng = np.random.default_rng(8)
        prof = column_profile(random_field(rng))
        assert np.all(np.diff(prof.values) <= 1e-12)


class TestDistances:
    def test_j1_dominates_l1(self):
        rng = np.random.default_rng(9)
        f, g = random_field(rng), random_field(rng)
        assert j1_distance(f, g) >= l1_distance(f, g)

    def test_grid_mismatch_raises(self):
        f = GridField(np.zeros((8, 8)), 2.0)
        g = GridField(np.zeros((8, 8)), 3.0)
        with pytest.raises(GridMismatchError):
            l1_distance(f, g)


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(10)
        f = random_field(rng, nx=16, ny=12)
        path = os.path.join(tmp_path, "f.csv")
        save_field(f, path)
        g = load_field(path)
        assert g.xmax == f.xmax
        assert np.array_equal(g.values, f.values)

    def test_reject_foreign_file(self, tmp_path):
        path = os.path.join(tmp_path, "junk.csv")
        with open(path, "w") as fh:
            fh.write("t,x\n0,1\n")
        with pytest.raises(GridMismatchError):
            load_field(path)
