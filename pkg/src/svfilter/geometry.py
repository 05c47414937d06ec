"""Planar geometry support: polyline paths with headings, oriented
rectangles, and exact convex-quadrilateral distance.

The rectangle distance is the minimum over all vertex-to-edge distances of
both quadrilaterals, with a separating-axis overlap pre-test that returns 0
for intersecting or touching shapes. This is exact for convex quads and
vectorizes over large batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Path:
    """Polyline with per-vertex headings and cumulative arc length.

    ``points`` is (P, 2), ``headings`` (P,) in radians (unwrapped so linear
    interpolation is valid), ``arclen`` (P,) non-decreasing with arclen[0]=0.
    """

    points: np.ndarray
    headings: np.ndarray
    arclen: np.ndarray

    @property
    def length(self) -> float:
        return float(self.arclen[-1])

    def pose(self, s):
        """Center position and heading at arc length ``s`` (scalar or array).

        ``s`` beyond the end extrapolates along the final heading; negative
        ``s`` is an error.
        """
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("arc length must be non-negative")
        s_clip = np.minimum(s, self.length)
        x = np.interp(s_clip, self.arclen, self.points[:, 0])
        y = np.interp(s_clip, self.arclen, self.points[:, 1])
        heading = np.interp(s_clip, self.arclen, self.headings)
        over = s - s_clip
        if np.any(over > 0):
            hf = self.headings[-1]
            x = x + over * np.cos(hf)
            y = y + over * np.sin(hf)
            heading = np.where(over > 0, hf, heading)
        return np.stack([x, y], axis=-1), heading


def straight_segment(start, heading, length, ds):
    """Sampled straight segment from ``start`` of a given length."""
    n = max(2, int(np.ceil(length / ds)) + 1)
    t = np.linspace(0.0, length, n)
    d = np.array([np.cos(heading), np.sin(heading)])
    pts = np.asarray(start, dtype=float)[None, :] + t[:, None] * d[None, :]
    return pts, np.full(n, float(heading)), t


def arc_segment(start, heading, radius, sweep, ds):
    """Sampled circular arc starting at ``start`` with initial ``heading``.

    ``sweep`` is the signed heading change (positive = left turn).
    """
    length = abs(sweep) * radius
    n = max(2, int(np.ceil(length / ds)) + 1)
    t = np.linspace(0.0, sweep, n)
    sign = 1.0 if sweep >= 0 else -1.0
    # Center sits perpendicular to the initial heading, on the turn side.
    cx = start[0] - sign * radius * np.sin(heading)
    cy = start[1] + sign * radius * np.cos(heading)
    ang0 = heading - sign * np.pi / 2.0
    ang = ang0 + t
    pts = np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=-1)
    headings = heading + t
    arclen = np.abs(t) * radius
    return pts, headings, arclen


def compose_path(segments) -> Path:
    """Concatenate (points, headings, arclen) segments into one Path,
    dropping duplicated joint vertices."""
    pts, heads, arcs = [], [], []
    offset = 0.0
    for i, (p, h, a) in enumerate(segments):
        if i > 0:
            p, h, a = p[1:], h[1:], a[1:]
        pts.append(p)
        heads.append(h)
        arcs.append(a + offset)
        offset = arcs[-1][-1]
    return Path(
        points=np.concatenate(pts, axis=0),
        headings=np.concatenate(heads, axis=0),
        arclen=np.concatenate(arcs, axis=0),
    )


def rect_corners(centers, headings, length, width):
    """Corners of oriented rectangles.

    ``centers`` (..., 2), ``headings`` (...,) -> (..., 4, 2) in CCW order.
    """
    centers = np.asarray(centers, dtype=float)
    headings = np.asarray(headings, dtype=float)
    c, s = np.cos(headings), np.sin(headings)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array(
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]]
    )  # (4, 2)
    rot = np.stack(
        [np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2
    )  # (..., 2, 2)
    world = np.einsum("...ij,kj->...ki", rot, local)
    return centers[..., None, :] + world


def _axis_gaps(corners_a, corners_b, axes):
    """Signed separation of corner projections along each axis.

    Positive gap on any axis means the shapes are disjoint along it.
    ``axes`` has shape (..., n_axes, 2).
    """
    pa = np.einsum("...ki,...ai->...ak", corners_a, axes)
    pb = np.einsum("...ki,...ai->...ak", corners_b, axes)
    gap1 = pb.min(axis=-1) - pa.max(axis=-1)
    gap2 = pa.min(axis=-1) - pb.max(axis=-1)
    return np.maximum(gap1, gap2)


def _point_segment_sqdist(points, seg_a, seg_b):
    """Squared distance from points (..., P, 1, 2) to segments given by
    endpoints (..., 1, E, 2)."""
    ab = seg_b - seg_a
    ap = points - seg_a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", ap, ab) / np.maximum(denom, 1e-300)
    t = np.clip(t, 0.0, 1.0)
    closest = seg_a + t[..., None] * ab
    diff = points - closest
    return np.einsum("...i,...i->...", diff, diff)


def _rect_pair_distance_numpy(corners_a, corners_b):
    corners_a = np.asarray(corners_a, dtype=float)
    corners_b = np.asarray(corners_b, dtype=float)
    # Two unique edge directions per rectangle give the four candidate axes.
    ea = corners_a[..., 1:3, :] - corners_a[..., 0:2, :]
    eb = corners_b[..., 1:3, :] - corners_b[..., 0:2, :]
    edges = np.concatenate([ea, eb], axis=-2)
    axes = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
    norms = np.linalg.norm(axes, axis=-1, keepdims=True)
    axes = axes / np.maximum(norms, 1e-300)
    gaps = _axis_gaps(corners_a, corners_b, axes)
    separated = (gaps > 0).any(axis=-1)

    seg_a0 = corners_a[..., None, :, :]
    seg_a1 = np.roll(corners_a, -1, axis=-2)[..., None, :, :]
    seg_b0 = corners_b[..., None, :, :]
    seg_b1 = np.roll(corners_b, -1, axis=-2)[..., None, :, :]
    d1 = _point_segment_sqdist(corners_a[..., :, None, :], seg_b0, seg_b1)
    d2 = _point_segment_sqdist(corners_b[..., :, None, :], seg_a0, seg_a1)
    min_sq = np.minimum(d1.min(axis=(-1, -2)), d2.min(axis=(-1, -2)))
    return np.where(separated, np.sqrt(min_sq), 0.0)


try:  # compiled kernel for the hot batched path; numpy math is the fallback
    from numba import njit as _njit

    @_njit(cache=True)
    def _rect_pair_distance_jit(ca, cb):  # pragma: no cover - exercised via wrapper
        n = ca.shape[0]
        out = np.empty(n)
        for b in range(n):
            separated = False
            for src in range(2):
                quad = ca if src == 0 else cb
                for e in range(2):
                    ax = -(quad[b, e + 1, 1] - quad[b, e, 1])
                    ay = quad[b, e + 1, 0] - quad[b, e, 0]
                    mina = 1e300
                    maxa = -1e300
                    minb = 1e300
                    maxb = -1e300
                    for k in range(4):
                        pa = ca[b, k, 0] * ax + ca[b, k, 1] * ay
                        pb = cb[b, k, 0] * ax + cb[b, k, 1] * ay
                        if pa < mina:
                            mina = pa
                        if pa > maxa:
                            maxa = pa
                        if pb < minb:
                            minb = pb
                        if pb > maxb:
                            maxb = pb
                    if minb > maxa or mina > maxb:
                        separated = True
                        break
                if separated:
                    break
            if not separated:
                out[b] = 0.0
                continue
            best = 1e300
            for side in range(2):
                pts = ca if side == 0 else cb
                seg = cb if side == 0 else ca
                for i in range(4):
                    px = pts[b, i, 0]
                    py = pts[b, i, 1]
                    for j in range(4):
                        j2 = (j + 1) & 3
                        qx = seg[b, j, 0]
                        qy = seg[b, j, 1]
                        rx = seg[b, j2, 0] - qx
                        ry = seg[b, j2, 1] - qy
                        rr = rx * rx + ry * ry
                        t = 0.0
                        if rr > 0.0:
                            t = ((px - qx) * rx + (py - qy) * ry) / rr
                            if t < 0.0:
                                t = 0.0
                            elif t > 1.0:
                                t = 1.0
                        dx = px - (qx + t * rx)
                        dy = py - (qy + t * ry)
                        dd = dx * dx + dy * dy
                        if dd < best:
                            best = dd
            out[b] = np.sqrt(best)
        return out

except ImportError:  # pragma: no cover
    _rect_pair_distance_jit = None


def rect_pair_distance(corners_a, corners_b):
    """Minimum Euclidean distance between batches of rectangles.

    ``corners_a``/``corners_b`` are (..., 4, 2) with vertices in order.
    Returns (...,) distances; 0 where the rectangles intersect or touch.
    """
    corners_a = np.asarray(corners_a, dtype=float)
    corners_b = np.asarray(corners_b, dtype=float)
    if _rect_pair_distance_jit is not None and corners_a.shape == corners_b.shape:
        lead = corners_a.shape[:-2]
        flat_a = np.ascontiguousarray(corners_a.reshape(-1, 4, 2))
        flat_b = np.ascontiguousarray(corners_b.reshape(-1, 4, 2))
        return _rect_pair_distance_jit(flat_a, flat_b).reshape(lead)
    return _rect_pair_distance_numpy(corners_a, corners_b)


def _quad_area(corners):
    x, y = corners[:, 0], corners[:, 1]
    return 0.5 * abs(
        np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    )


def polygon_distance(rect_a, rect_b) -> float:
    """Exact minimum distance between two convex quadrilaterals.

    Inputs are (4, 2) corner arrays in boundary order. Returns 0 exactly when
    the shapes intersect or touch. Degenerate (zero-area) input is rejected.
    """
    a = np.asarray(rect_a, dtype=float)
    b = np.asarray(rect_b, dtype=float)
    if a.shape != (4, 2) or b.shape != (4, 2):
        raise ValueError("expected (4, 2) corner arrays")
    if _quad_area(a) <= 0.0 or _quad_area(b) <= 0.0:
        raise ValueError("degenerate rectangle with zero area")
    return float(rect_pair_distance(a[None], b[None])[0])
