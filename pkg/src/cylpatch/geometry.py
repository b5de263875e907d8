"""Marker-curve patches on the half cylinder and their exact polygon functionals.

Patches live in the universal cover R+ x R. A contour is an ordered marker
polyline with a closure edge back to its first marker; ``wrap`` selects the
topology. wrap = 0 is an ordinary closed polygon (counterclockwise). wrap =
+-1 is a curve winding once around the cylinder: the closure edge ends at
first_marker + (0, 2 pi wrap). The steady strip {x1 < 1} is represented by
two winding circles, the outer one at x1 = 1 traversed upward (wrap +1) and
the wall circle at x1 = 0 traversed downward (wrap -1); together they bound
the strip with the region on the left of the traversal.

All area-type functionals are edge sums of exact antiderivatives along
straight segments (Green's theorem), including the closure edge:

    area          = contour integral of x1 dx2
    moment_x1     = contour integral of (x1^2 / 2) dx2     (= int x1 dA)
    moment_x2     = contour integral of (x1 x2) dx2        (= int x2 dA)

so they are exact for the polygon, not quadrature approximations.

Membership and symmetric-difference functionals against the strip are
computed by a scanline over cylinder rows: each edge is shifted by the
2 pi multiple nearest the row, crossings are accumulated right to left
into a winding count, and the row's inside set is intersected with the
strip interval analytically. The half-open crossing rule (lower endpoint
in, upper endpoint out) makes boundary membership deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import GeometryError
from .rearrange import GridField

TWO_PI = 2.0 * np.pi

__all__ = [
    "Contour",
    "Patch",
    "to_cylinder",
    "contour_edges",
    "marker_gaps",
    "polygon_area",
    "polygon_perimeter",
    "polygon_moment_x1",
    "polygon_moment_x2",
    "patch_area",
    "patch_impulse",
    "patch_perimeter",
    "vertical_center",
    "strip_velocity_profile",
    "make_strip",
    "make_cover_strip",
    "apply_shear",
    "make_rectangle",
    "membership",
    "sym_diff_functionals",
    "rasterize_patch",
    "save_patch",
    "load_patch",
]


def to_cylinder(points):
    """Map cover points to the fundamental domain x2 in [-pi, pi).

    Accepts (..., 2) arrays; x1 is unchanged.
    """
    p = np.array(points, dtype=np.float64, copy=True)
    x2 = p[..., 1]
    p[..., 1] = x2 - TWO_PI * np.floor((x2 + np.pi) / TWO_PI)
    return p


@dataclass(frozen=True)
class Contour:
    """Oriented marker curve with vorticity strength +-1.

    wrap = 0: closed polygon, counterclockwise (signed area > 0).
    wrap = +-1: winds once around the cylinder; the closure edge ends at
    markers[0] + (0, 2 pi wrap).
    """

    markers: np.ndarray
    strength: float = 1.0
    wrap: int = 0

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.markers, dtype=np.float64))
        if m.ndim != 2 or m.shape[1] != 2 or m.shape[0] < 3:
            raise GeometryError(f"markers must be (n >= 3, 2), got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise GeometryError("markers must be finite")
        x1min = m[:, 0].min()
        if x1min < -1e-12:
            raise GeometryError(f"marker x1 = {x1min} beyond the wall (allowed >= -1e-12)")
        if x1min < 0.0:
            m = m.copy()
            np.clip(m[:, 0], 0.0, None, out=m[:, 0])  # snap fp dust onto the wall
        object.__setattr__(self, "markers", m)
        object.__setattr__(self, "strength", float(self.strength))
        object.__setattr__(self, "wrap", int(self.wrap))
        if self.strength not in (1.0, -1.0):
            raise GeometryError(f"strength must be +1 or -1, got {self.strength}")
        if self.wrap not in (-1, 0, 1):
            raise GeometryError(f"wrap must be -1, 0, or 1, got {self.wrap}")
        gaps = marker_gaps(self)
        if gaps.min() < 1e-12:
            raise GeometryError("degenerate segment: adjacent markers closer than 1e-12")
        if self.wrap == 0:
            area = polygon_area(self)
            if abs(area) < 1e-12:
                raise GeometryError("degenerate polygon: |area| < 1e-12")
            if area < 0.0:
                raise GeometryError("closed contours must be counterclockwise (area > 0)")

    @property
    def n(self) -> int:
        return self.markers.shape[0]

    def with_markers(self, markers: np.ndarray) -> "Contour":
        return Contour(markers, self.strength, self.wrap)


def contour_edges(c: Contour) -> tuple[np.ndarray, np.ndarray]:
    """Edge start/end arrays (n, 2) including the closure edge."""
    a = c.markers
    b = np.roll(a, -1, axis=0).copy()
    b[-1] = a[0]
    b[-1, 1] += TWO_PI * c.wrap
    return a, b


def marker_gaps(c: Contour) -> np.ndarray:
    a = c.markers
    d = np.roll(a, -1, axis=0) - a
    d[-1, 1] += TWO_PI * c.wrap
    return np.hypot(d[:, 0], d[:, 1])


def polygon_area(c: Contour) -> float:
    """Signed area, contour integral of x1 dx2 over all edges."""
    a, b = contour_edges(c)
    d = b - a
    return float(np.sum(d[:, 1] * (a[:, 0] + 0.5 * d[:, 0])))


def polygon_perimeter(c: Contour) -> float:
    return float(marker_gaps(c).sum())


def polygon_moment_x1(c: Contour) -> float:
    """int x1 dA: contour integral of (x1^2 / 2) dx2, exact per edge."""
    a, b = contour_edges(c)
    d = b - a
    p1, d1, d2 = a[:, 0], d[:, 0], d[:, 1]
    return float(np.sum(0.5 * d2 * (p1 * p1 + p1 * d1 + d1 * d1 / 3.0)))


def polygon_moment_x2(c: Contour) -> float:
    """int x2 dA: contour integral of (x1 x2) dx2, exact per edge."""
    a, b = contour_edges(c)
    d = b - a
    p1, p2, d1, d2 = a[:, 0], a[:, 1], d[:, 0], d[:, 1]
    return float(np.sum(d2 * (p1 * p2 + 0.5 * (p1 * d2 + p2 * d1) + d1 * d2 / 3.0)))


@dataclass(frozen=True)
class Patch:
    """Union of weighted contours; vorticity is the strength-weighted winding."""

    contours: tuple
    label: str = ""

    def __post_init__(self):
        cs = tuple(self.contours)
        if not cs:
            raise GeometryError("patch needs at least one contour")
        for c in cs:
            if not isinstance(c, Contour):
                raise GeometryError(f"patch contours must be Contour, got {type(c).__name__}")
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                a, b = cs[i], cs[j]
                if (
                    a.n == b.n
                    and a.wrap == b.wrap
                    and a.strength == b.strength
                    and np.array_equal(a.markers, b.markers)
                ):
                    raise GeometryError(f"contours {i} and {j} are identical")
        object.__setattr__(self, "contours", cs)
        if patch_area(self) <= 0.0:
            raise GeometryError("total signed area must be positive")

    def with_contours(self, contours) -> "Patch":
        return Patch(tuple(contours), self.label)


def patch_area(p: Patch) -> float:
    return sum(c.strength * polygon_area(c) for c in p.contours)


def patch_impulse(p: Patch) -> float:
    return sum(c.strength * polygon_moment_x1(c) for c in p.contours)


def patch_perimeter(p: Patch) -> float:
    return sum(polygon_perimeter(c) for c in p.contours)


def vertical_center(p: Patch) -> float:
    """Mass-normalized vertical first moment in the cover."""
    return sum(c.strength * polygon_moment_x2(c) for c in p.contours) / patch_area(p)


def strip_velocity_profile(x1):
    """Vertical velocity of the steady strip: max(1 - x1, 0)."""
    x1 = np.asarray(x1, dtype=np.float64)
    return np.maximum(1.0 - x1, 0.0)


def make_strip(nodes: int = 512) -> Patch:
    """The steady strip {x1 < 1}: outer circle (index 0) plus wall circle.

    The outer circle at x1 = 1 ascends in x2 (wrap +1); the wall circle at
    x1 = 0 descends (wrap -1). Both carry strength +1 and ``nodes`` markers.
    """
    if nodes < 3:
        raise GeometryError(f"nodes must be >= 3, got {nodes}")
    k = np.arange(nodes)
    outer = np.column_stack((np.ones(nodes), -np.pi + TWO_PI * k / nodes))
    wall = np.column_stack((np.zeros(nodes), np.pi - TWO_PI * k / nodes))
    return Patch(
        (Contour(outer, 1.0, wrap=1), Contour(wall, 1.0, wrap=-1)),
        label="strip",
    )


def make_cover_strip(nodes_per_side: int = 64) -> Patch:
    """One period of the strip as a closed rectangle [0,1] x [-pi, pi].

    Unlike make_strip this is an ordinary polygon in the cover, so affine
    marker maps (for example a shear) change its moments the way they
    change the underlying set. Used for exact-geometry tests.
    """
    n = int(nodes_per_side)
    if n < 2:
        raise GeometryError(f"nodes_per_side must be >= 2, got {n}")
    s = np.arange(n) / n
    bottom = np.column_stack((s, np.full(n, -np.pi)))
    right = np.column_stack((np.ones(n), -np.pi + TWO_PI * s))
    top = np.column_stack((1.0 - s, np.full(n, np.pi)))
    left = np.column_stack((np.zeros(n), np.pi - TWO_PI * s))
    markers = np.vstack((bottom, right, top, left))
    return Patch((Contour(markers, 1.0, wrap=0),), label="cover-strip")


def apply_shear(p: Patch, t: float) -> Patch:
    """Marker map (x1, x2) -> (x1, x2 + (1 - x1) t): advection by the strip flow."""
    t = float(t)
    out = []
    for c in p.contours:
        m = c.markers.copy()
        m[:, 1] += (1.0 - m[:, 0]) * t
        out.append(c.with_markers(m))
    return p.with_contours(out)


def _arc(center, radius, phi0, phi1, count):
    phi = phi0 + (phi1 - phi0) * np.arange(count) / count
    return np.column_stack((center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)))


def make_rectangle(h: float, r: float, nodes0: int = 640) -> Patch:
    """Near-strip rounded rectangle {0 < x1 < a, |x2| < pi - h} of area 2 pi.

    The four corners are rounded at radius r (the boundary is C^1). The
    width a starts from the smooth-shape closed form
    a = (2 pi + (4 - pi) r^2) / (2 pi - 2 h) and is then adjusted so the
    marker POLYGON area is 2 pi to 1e-12 (the inscribed polygon is
    slightly smaller than the smooth shape). (0, 0) is an exact marker,
    placed first; the wall segment through it is part of the boundary.
    """
    h, r = float(h), float(r)
    if not (0.0 < r <= 0.5 * h < np.pi / 8.0):
        raise GeometryError(f"need 0 < r <= h/2 < pi/8, got h={h}, r={r}")
    if nodes0 < 64:
        raise GeometryError(f"nodes0 must be >= 64, got {nodes0}")
    H = np.pi - h
    a = (TWO_PI + (4.0 - np.pi) * r * r) / (TWO_PI - 2.0 * h)

    def build(a):
        wall_len = 2.0 * (H - r)
        edge_len = a - 2.0 * r
        perim = 2.0 * wall_len + 2.0 * edge_len + TWO_PI * r
        s0 = perim / nodes0
        m_wall = max(2, int(round(wall_len / s0 / 2.0)) * 2)  # even: hits x2 = 0 exactly
        m_edge = max(2, int(round(edge_len / s0)))
        m_arc = max(4, int(round((np.pi / 2.0) * r / s0)))
        tw = np.arange(m_wall) / m_wall
        te = np.arange(m_edge) / m_edge
        pieces = [
            np.column_stack((np.zeros(m_wall), (H - r) - wall_len * tw)),     # wall, downward
            _arc((r, -(H - r)), r, np.pi, 1.5 * np.pi, m_arc),                # bottom-left
            np.column_stack((r + edge_len * te, np.full(m_edge, -H))),        # bottom
            _arc((a - r, -(H - r)), r, 1.5 * np.pi, TWO_PI, m_arc),           # bottom-right
            np.column_stack((np.full(m_wall, a), -(H - r) + wall_len * tw)),  # right, upward
            _arc((a - r, H - r), r, 0.0, 0.5 * np.pi, m_arc),                 # top-right
            np.column_stack((a - r - edge_len * te, np.full(m_edge, H))),     # top
            _arc((r, H - r), r, 0.5 * np.pi, np.pi, m_arc),                   # top-left
        ]
        return np.vstack(pieces)

    markers = build(a)
    area = polygon_area(Contour(markers, 1.0, 0))
    for _ in range(4):  # area is affine in a to rounding; one step nearly exact
        if abs(area - TWO_PI) < 1e-12:
            break
        a += (TWO_PI - area) / (2.0 * H)
        markers = build(a)
        area = polygon_area(Contour(markers, 1.0, 0))
    if abs(area - TWO_PI) > 1e-9:
        raise GeometryError(f"rectangle area adjustment failed: {area} vs {TWO_PI}")

    wall_zero = np.nonzero((markers[:, 0] == 0.0) & (markers[:, 1] == 0.0))[0]
    if wall_zero.size != 1:
        raise GeometryError("rectangle construction lost the (0, 0) wall marker")
    markers = np.roll(markers, -int(wall_zero[0]), axis=0)
    return Patch((Contour(markers, 1.0, wrap=0),), label=f"rectangle(h={h},r={r})")


# ---------------------------------------------------------------------------
# scanline machinery


def _edge_arrays(p: Patch):
    """Concatenated edge (start, delta, strength) arrays over all contours."""
    a1, a2, d1, d2, w = [], [], [], [], []
    for c in p.contours:
        a, b = contour_edges(c)
        d = b - a
        a1.append(a[:, 0])
        a2.append(a[:, 1])
        d1.append(d[:, 0])
        d2.append(d[:, 1])
        w.append(np.full(a.shape[0], c.strength))
    return (
        np.concatenate(a1),
        np.concatenate(a2),
        np.concatenate(d1),
        np.concatenate(d2),
        np.concatenate(w),
    )


@njit(cache=True)
def _row_crossings(a1, a2, d1, d2, w, c, X, S):
    """Crossings of the cylinder row x2 = c with all edges.

    Each edge is tested against the single 2 pi translate of c nearest its
    own midpoint (edges span less than 2 pi vertically). Half-open rule:
    the lower-x2 endpoint belongs to the edge, the upper one does not.
    Fills X (crossing x1) and S (winding jump when passing to the left),
    returns the count, with X sorted ascending.
    """
    m = 0
    E = a1.shape[0]
    for e in range(E):
        de = d2[e]
        if de == 0.0:
            continue
        mid = a2[e] + 0.5 * de
        cc = c + TWO_PI * np.rint((mid - c) / TWO_PI)
        if de > 0.0:
            hit = (a2[e] <= cc) and (cc < a2[e] + de)
            sg = w[e]
        else:
            hit = (a2[e] + de <= cc) and (cc < a2[e])
            sg = -w[e]
        if hit:
            X[m] = a1[e] + (cc - a2[e]) * d1[e] / de
            S[m] = sg
            m += 1
    # insertion sort (few crossings per row)
    for i in range(1, m):
        xv = X[i]
        sv = S[i]
        j = i - 1
        while j >= 0 and X[j] > xv:
            X[j + 1] = X[j]
            S[j + 1] = S[j]
            j -= 1
        X[j + 1] = xv
        S[j + 1] = sv
    return m


@njit(cache=True)
def _winding_at(a1, a2, d1, d2, w, p1, p2, X, S):
    m = _row_crossings(a1, a2, d1, d2, w, p2, X, S)
    acc = 0.0
    for k in range(m - 1, -1, -1):
        if X[k] <= p1:
            break
        acc += S[k]
    return acc


@njit(cache=True)
def _membership_core(a1, a2, d1, d2, w, pts, out):
    E = a1.shape[0]
    X = np.empty(E, dtype=np.float64)
    S = np.empty(E, dtype=np.float64)
    for i in range(pts.shape[0]):
        out[i] = _winding_at(a1, a2, d1, d2, w, pts[i, 0], pts[i, 1], X, S)


@njit(cache=True)
def _symdiff_core(a1, a2, d1, d2, w, res):
    """(area, j1, weighted) of the patch's symmetric difference with {x1 < 1}.

    Row sampling at res cylinder rows; within each row the inside set is
    exact intervals, and the three weights 1, 1 + x1, |1 - x1| are
    integrated analytically, so the only error is the row quadrature.
    """
    E = a1.shape[0]
    X = np.empty(E, dtype=np.float64)
    S = np.empty(E, dtype=np.float64)
    dy = TWO_PI / res
    tot_a = 0.0
    tot_j = 0.0
    tot_w = 0.0
    for row in range(res):
        c = -np.pi + (row + 0.5) * dy
        m = _row_crossings(a1, a2, d1, d2, w, c, X, S)
        # suffix winding: region right of the last crossing is outside
        sa = 1.0   # strip row integrals of 1, (1+x), |1-x| over [0, 1)
        sj = 1.5
        sw = 0.5
        acc = 0.0
        for k in range(m - 1, -1, -1):
            acc += S[k]
            if acc > 0.5:
                l = X[k - 1] if k > 0 else 0.0  # domain edge closes the region
                rr = X[k]
                if l < 0.0:
                    l = 0.0
                if rr > l:
                    # int over [l, rr) of the three weights
                    ia = rr - l
                    ij = ia + 0.5 * (rr * rr - l * l)
                    if rr <= 1.0:
                        iw = ia - 0.5 * (rr * rr - l * l)
                    elif l >= 1.0:
                        iw = 0.5 * (rr * rr - l * l) - ia
                    else:
                        iw = (1.0 - l) - 0.5 * (1.0 - l * l) + 0.5 * (rr * rr - 1.0) - (rr - 1.0)
                    tot_a += ia
                    tot_j += ij
                    tot_w += iw
                    # intersection with the strip [0, 1)
                    il = l
                    ir = rr if rr < 1.0 else 1.0
                    if ir > il:
                        ca = ir - il
                        cj = ca + 0.5 * (ir * ir - il * il)
                        cw = ca - 0.5 * (ir * ir - il * il)
                        tot_a -= 2.0 * ca
                        tot_j -= 2.0 * cj
                        tot_w -= 2.0 * cw
        tot_a += sa
        tot_j += sj
        tot_w += sw
    return tot_a * dy, tot_j * dy, tot_w * dy


def membership(p: Patch):
    """Set-membership test of the patch projected to the cylinder.

    Returns a vectorized predicate on (..., 2) point arrays. A point is
    inside when the strength-weighted winding of the cover contours about
    any of its 2 pi translates exceeds 1/2.
    """
    a1, a2, d1, d2, w = _edge_arrays(p)

    def inside(points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        shape = pts.shape[:-1]
        flat = np.ascontiguousarray(pts.reshape(-1, 2))
        out = np.empty(flat.shape[0], dtype=np.float64)
        _membership_core(a1, a2, d1, d2, w, flat, out)
        return (out > 0.5).reshape(shape)

    return inside


def sym_diff_functionals(p: Patch, resolution: int = 2048):
    """Functionals of (patch symdiff strip): area, J1 weight, |1 - x1| weight.

    Returns a dict with keys area, j1, weighted, error_bound. The bound is
    the standard raster estimate perimeter * row height; x1 integrals are
    exact within each row.
    """
    if resolution < 128:
        raise ValueError(f"resolution must be >= 128, got {resolution}")
    a1, a2, d1, d2, w = _edge_arrays(p)
    area, j1, wgt = _symdiff_core(a1, a2, d1, d2, w, resolution)
    bound = patch_perimeter(p) * (TWO_PI / resolution)
    return {"area": area, "j1": j1, "weighted": wgt, "error_bound": bound}


@njit(cache=True)
def _raster_core(a1, a2, d1, d2, w, nx, ny, xmax, out):
    E = a1.shape[0]
    X = np.empty(E, dtype=np.float64)
    S = np.empty(E, dtype=np.float64)
    dxc = xmax / nx
    dy = TWO_PI / ny
    for j in range(ny):
        c = -np.pi + (j + 0.5) * dy
        m = _row_crossings(a1, a2, d1, d2, w, c, X, S)
        acc = 0.0
        for k in range(m - 1, -1, -1):
            acc += S[k]
            if acc > 0.5:
                l = X[k - 1] if k > 0 else 0.0
                rr = X[k]
                if l < 0.0:
                    l = 0.0
                if rr > l:
                    i0 = int(np.ceil(l / dxc - 0.5))
                    i1 = int(np.ceil(rr / dxc - 0.5))  # cells with center in [l, rr)
                    if i0 < 0:
                        i0 = 0
                    if i1 > nx:
                        i1 = nx
                    for i in range(i0, i1):
                        out[i, j] = 1.0


def rasterize_patch(p: Patch, nx: int, ny: int, xmax: float) -> GridField:
    """Indicator of the projected patch sampled at cell centers."""
    hi = max(c.markers[:, 0].max() for c in p.contours)
    if hi >= xmax - xmax / nx:
        raise GeometryError(f"patch reaches x1 = {hi}, too close to the truncation xmax = {xmax}")
    a1, a2, d1, d2, w = _edge_arrays(p)
    out = np.zeros((nx, ny), dtype=np.float64)
    _raster_core(a1, a2, d1, d2, w, nx, ny, float(xmax), out)
    return GridField(out, float(xmax))


# ---------------------------------------------------------------------------
# serialization


def save_patch(p: Patch, path) -> None:
    """One block per contour: a header line, then n lines of x1,x2.

    %r floats round-trip exactly through load_patch.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"patch,label={p.label},ncontours={len(p.contours)}\n")
        for c in p.contours:
            fh.write(f"contour,strength={float(c.strength)!r},wrap={c.wrap},n={c.n}\n")
            for x1, x2 in c.markers:
                fh.write(f"{float(x1)!r},{float(x2)!r}\n")


def load_patch(path) -> Patch:
    with open(path, "r", encoding="ascii") as fh:
        head = fh.readline().strip()
        if not head.startswith("patch,label="):
            raise GeometryError(f"not a patch file: {head!r}")
        body, meta = head.split("label=", 1)[1], {}
        label, _, rest = body.partition(",ncontours=")
        ncont = int(rest)
        contours = []
        for _ in range(ncont):
            hdr = fh.readline().strip()
            if not hdr.startswith("contour,"):
                raise GeometryError(f"bad contour header: {hdr!r}")
            for item in hdr.split(",")[1:]:
                key, _, val = item.partition("=")
                meta[key] = val
            n = int(meta["n"])
            rows = np.empty((n, 2), dtype=np.float64)
            for i in range(n):
                s1, _, s2 = fh.readline().strip().partition(",")
                rows[i, 0] = float(s1)
                rows[i, 1] = float(s2)
            contours.append(Contour(rows, float(meta["strength"]), int(meta["wrap"])))
    return Patch(tuple(contours), label)
