"""Green's function and Biot-Savart kernel of the half cylinder.

The periodic strip R x T carries the explicit Green's function

    gamma_s(d) = -(1/4 pi) ln(cosh d1 - cos d2),

2 pi periodic in d2 and even in each argument, with perpendicular gradient

    kernel_s(d) = (sin d2, -sinh d1) / (4 pi (cosh d1 - cos d2)).

The wall at x1 = 0 is handled by images: with ybar = (y1, -y2),

    green_half(x, y)  = gamma_s(x - y) - gamma_s(x1 + y1, x2 - y2)
    kernel_half(x, y) = kernel_s(x - y) - kernel_s(x1 + y1, x2 - y2)

so the stream function vanishes on the wall and no flow crosses it. The
velocity induced by a vorticity field w is u(x) = int kernel_half(x, y)
w(y) dy.

Two evaluators are provided. ``velocity_from_grid`` integrates the kernel
against gridded vorticity by cell midpoints (with recursive refinement of
the cell containing x); it is slow and fully independent of the contour
machinery, serving as the oracle. ``velocity_from_contours`` reduces the
area integral over a patch with unit strengths to boundary integrals,

    u(x) = - sum_c s_c [ oint_c gamma_s(x - y) dvec(y)
                         + oint_{c'} gamma_s(x - y) dvec(y) ],

where c' is c reflected through the wall ((y1, y2) -> (-y1, y2), same
traversal order, same coefficient). A contour lying exactly on the wall
coincides with its reflection and its contribution doubles; that term is
what bends the strip's velocity profile to max(1 - x1, 0) instead of
leaving a spurious constant.

Per (target, edge) pair the vertical offset is reduced by the nearest
2 pi multiple and the log integral is computed in one of three tiers:
exact straight-segment antiderivative of ln|r| plus a midpoint rule on
the smooth remainder (targets on or near the curve, within 6 edge
lengths), two-point Gauss-Legendre (within distance 2), or a single
midpoint evaluation (far field). Markers on the integration curve itself
need no special casing: the antiderivative is finite there.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import GeometryError, SingularInputError
from .geometry import Contour, Patch, contour_edges
from .rearrange import GridField

TWO_PI = 2.0 * np.pi
INV_4PI = 1.0 / (4.0 * np.pi)
LN2 = np.log(2.0)

__all__ = [
    "gamma_s",
    "kernel_s",
    "green_half",
    "kernel_half",
    "velocity_from_grid",
    "velocity_from_contours",
    "warmup",
]


def _core(d1, d2):
    c = np.cosh(d1) - np.cos(d2)
    if np.any(c < 1e-300):
        raise SingularInputError("kernel argument at a singular lattice point (0, 2 pi k)")
    return c


def gamma_s(d1, d2):
    """Periodic-strip Green's function at offset (d1, d2). Broadcasts."""
    return -INV_4PI * np.log(_core(np.asarray(d1, dtype=np.float64), np.asarray(d2, dtype=np.float64)))


def kernel_s(d1, d2):
    """Perpendicular gradient of gamma_s, shape (..., 2). Broadcasts."""
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    c = _core(d1, d2)
    return np.stack(np.broadcast_arrays(np.sin(d2) / (4.0 * np.pi * c), -np.sinh(d1) / (4.0 * np.pi * c)), axis=-1)


def _split_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y[..., 0] < -1e-12):
        raise GeometryError("source point y1 < 0 is outside the half cylinder")
    return x[..., 0], x[..., 1], y[..., 0], y[..., 1]


def green_half(x, y):
    """Wall-adapted Green's function Gamma(x, y); zero when x1 = 0 or y1 = 0."""
    x1, x2, y1, y2 = _split_xy(x, y)
    return gamma_s(x1 - y1, x2 - y2) - gamma_s(x1 + y1, x2 - y2)


def kernel_half(x, y):
    """Wall-adapted kernel K(x, y), shape (..., 2); K1 = 0 on the wall."""
    x1, x2, y1, y2 = _split_xy(x, y)
    return kernel_s(x1 - y1, x2 - y2) - kernel_s(x1 + y1, x2 - y2)


# ---------------------------------------------------------------------------
# grid quadrature oracle


def _grid_point_velocity(vals, x1c, x2c, cell_area, p1, p2):
    """Midpoint sum of kernel_half(p, cell centers) * values, minus self cell.

    Separable reductions keep this O(nx ny) per point. Returns
    (u1, u2, i, j) with (i, j) the indices of the cell containing p, or
    (-1, -1) when p lies outside the grid.
    """
    nx, ny = vals.shape
    dxc = x1c[1] - x1c[0]
    dyc = x2c[1] - x2c[0]
    i = int(np.floor(p1 / dxc))
    j = int(np.floor((p2 + np.pi) / dyc))
    self_cell = 0 <= i < nx and 0 <= j < ny and vals[i, j] != 0.0

    w = vals
    if self_cell:
        w = vals.copy()
        w[i, j] = 0.0  # replaced by the refined sum

    # direct term: core(i, j) = cosh(p1 - x1c[i]) - cos(p2 - x2c[j])
    def reduce_pair(a1, a2, sign):
        ch = np.cosh(a1)
        cs = np.cos(a2)
        W = w / (ch[:, None] - cs[None, :])
        u1 = float(W.sum(axis=0) @ np.sin(a2))
        u2 = -float(W.sum(axis=1) @ np.sinh(a1))
        return sign * u1, sign * u2

    u1d, u2d = reduce_pair(p1 - x1c, p2 - x2c, 1.0)
    u1m, u2m = reduce_pair(p1 + x1c, p2 - x2c, -1.0)
    u1 = (u1d + u1m) * INV_4PI * cell_area
    u2 = (u2d + u2m) * INV_4PI * cell_area
    return u1, u2, (i if self_cell else -1), (j if self_cell else -1)


def _refine_cell(val, cx, cy, hw1, hw2, p1, p2, depth, sub):
    """Recursive midpoint quadrature of kernel_half over one cell.

    The sub-cell containing p recurses until depth runs out; at the
    bottom its midpoint is perturbed by half a sub-cell width to dodge
    the singularity (its true contribution vanishes to leading order).
    """
    u1 = 0.0
    u2 = 0.0
    sw1 = hw1 / sub
    sw2 = hw2 / sub
    sub_area = 4.0 * sw1 * sw2
    for ii in range(sub):
        yc1 = cx - hw1 + (2 * ii + 1) * sw1
        for jj in range(sub):
            yc2 = cy - hw2 + (2 * jj + 1) * sw2
            hit = abs(p1 - yc1) < sw1 and abs(p2 - yc2) < sw2
            if hit and depth > 0:
                s1, s2 = _refine_cell(val, yc1, yc2, sw1, sw2, p1, p2, depth - 1, sub)
                u1 += s1
                u2 += s2
                continue
            q1, q2 = (yc1 + sw1, yc2 + sw2) if hit else (yc1, yc2)
            cd = np.cosh(p1 - q1) - np.cos(p2 - q2)
            cm = np.cosh(p1 + q1) - np.cos(p2 - q2)
            u1 += (np.sin(p2 - q2) / cd - np.sin(p2 - q2) / cm) * val * sub_area
            u2 += (-np.sinh(p1 - q1) / cd + np.sinh(p1 + q1) / cm) * val * sub_area
    return u1 * INV_4PI, u2 * INV_4PI


def velocity_from_grid(field: GridField, points, depth: int = 3, sub: int = 4):
    """Velocity induced by gridded vorticity, by cell-midpoint quadrature.

    The cell containing each evaluation point is subdivided sub x sub
    recursively to the given depth. Independent of the contour code path;
    used as the oracle in cross-checks. Accepts (2,) or (M, 2) points.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if np.any(pts[:, 0] < 0.0):
        raise GeometryError("evaluation points must satisfy x1 >= 0")
    vals = field.values
    x1c = field.x1_centers
    x2c = field.x2_centers
    hw1 = 0.5 * field.dx
    hw2 = np.pi / field.ny
    out = np.empty_like(pts)
    for k in range(pts.shape[0]):
        p1, p2 = pts[k, 0], pts[k, 1] - TWO_PI * np.rint(pts[k, 1] / TWO_PI)
        u1, u2, i, j = _grid_point_velocity(vals, x1c, x2c, field.cell_area, p1, p2)
        if i >= 0:
            s1, s2 = _refine_cell(vals[i, j], x1c[i], x2c[j], hw1, hw2, p1, p2, depth, sub)
            u1 += s1
            u2 += s2
        out[k, 0] = u1
        out[k, 1] = u2
    return out[0] if single else out


# ---------------------------------------------------------------------------
# contour evaluator


@njit(cache=True, fastmath=True)
def _edge_log_sum(tx, ax, ay, ex, ey, mx, my, L, coef, out):
    """Accumulate coef * (mean of gamma_s along each edge) * edge vector.

    Three tiers per (target, edge) pair after reducing the vertical
    offset by its nearest 2 pi multiple: far midpoint (squared distance
    over 4), two-point Gauss-Legendre (over 36 L^2), else the exact
    antiderivative of the log part plus a midpoint remainder. The same
    shift is applied to the target-to-edge-start vector so edges across
    the seam keep consistent geometry.
    """
    M = tx.shape[0]
    E = ax.shape[0]
    g = 0.5 / np.sqrt(3.0)
    for i in range(M):
        px = tx[i, 0]
        py = tx[i, 1]
        u1 = 0.0
        u2 = 0.0
        for e in range(E):
            dy0 = py - my[e]
            dy = dy0 - TWO_PI * np.rint(dy0 / TWO_PI)
            dx = px - mx[e]
            d2 = dx * dx + dy * dy
            Le = L[e]
            if d2 > 4.0:
                val = -INV_4PI * np.log(np.cosh(dx) - np.cos(dy))
            elif d2 > 36.0 * Le * Le:
                hx = ex[e] * g
                hy = ey[e] * g
                r1 = np.cosh(dx - hx) - np.cos(dy - hy)
                r2 = np.cosh(dx + hx) - np.cos(dy + hy)
                val = -INV_4PI * 0.5 * (np.log(r1) + np.log(r2))
            else:
                wx = px - ax[e]
                wy = dy + (my[e] - ay[e])  # shifted offset to the edge start
                invL = 1.0 / Le
                al = (wx * ex[e] + wy * ey[e]) * invL
                p2 = wx * wx + wy * wy - al * al
                if p2 < 0.0:
                    p2 = 0.0
                b = np.sqrt(p2)
                u_hi = Le - al
                u_lo = -al
                if b > 1e-14:
                    Ghi = u_hi * np.log(u_hi * u_hi + p2) - 2.0 * u_hi + 2.0 * b * np.arctan2(u_hi, b)
                    Glo = u_lo * np.log(u_lo * u_lo + p2) - 2.0 * u_lo + 2.0 * b * np.arctan2(u_lo, b)
                else:
                    Ghi = -2.0 * u_hi
                    Glo = -2.0 * u_lo
                    if np.abs(u_hi) > 1e-300:
                        Ghi += u_hi * np.log(u_hi * u_hi)
                    if np.abs(u_lo) > 1e-300:
                        Glo += u_lo * np.log(u_lo * u_lo)
                intln = 0.5 * (Ghi - Glo)
                if d2 > 1e-28:
                    R = -INV_4PI * np.log(2.0 * (np.cosh(dx) - np.cos(dy)) / d2)
                else:
                    R = 0.0  # remainder vanishes at the singularity
                val = (-intln / TWO_PI + Le * (LN2 * INV_4PI + R)) * invL
            u1 += coef[e] * val * ex[e]
            u2 += coef[e] * val * ey[e]
        out[i, 0] = u1
        out[i, 1] = u2


def _assemble_edges(contours):
    """Edge arrays for the boundary integral: direct plus mirror edges.

    Mirror edges are the reflection (y1, y2) -> (-y1, y2) in the same
    traversal order; both carry coefficient -strength.
    """
    ax, ay, ex, ey, coef = [], [], [], [], []
    for c in contours:
        a, b = contour_edges(c)
        d = b - a
        for asign in (1.0, -1.0):
            ax.append(asign * a[:, 0])
            ay.append(a[:, 1])
            ex.append(asign * d[:, 0])
            ey.append(d[:, 1])
            coef.append(np.full(a.shape[0], -c.strength))
    ax = np.concatenate(ax)
    ay = np.concatenate(ay)
    ex = np.concatenate(ex)
    ey = np.concatenate(ey)
    L = np.hypot(ex, ey)
    if np.any(L < 1e-12):
        raise GeometryError("degenerate segment shorter than 1e-12")
    mx = ax + 0.5 * ex
    my = ay + 0.5 * ey
    return ax, ay, ex, ey, mx, my, L, np.concatenate(coef)


def velocity_from_contours(patch, points):
    """Velocity induced by a patch, as boundary integrals over its contours.

    ``patch`` may be a Patch or an iterable of Contours. Accepts (2,) or
    (M, 2) evaluation points in cover coordinates; safe at the markers
    themselves and on the wall.
    """
    contours = patch.contours if isinstance(patch, Patch) else tuple(patch)
    ax, ay, ex, ey, mx, my, L, coef = _assemble_edges(contours)
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(pts))
    out = np.empty_like(pts)
    _edge_log_sum(pts, ax, ay, ex, ey, mx, my, L, coef, out)
    return out[0] if single else out


def warmup() -> None:
    """Compile the jitted kernels on toy input (call before timing anything)."""
    tri = Contour(np.array([[0.5, 0.0], [1.5, 0.0], [1.0, 1.0]]), 1.0, 0)
    velocity_from_contours((tri,), np.array([[0.2, 0.1], [1.0, 0.4]]))

