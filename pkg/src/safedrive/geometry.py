"""2D polyline and ray-casting primitives used by the driving environment."""

from __future__ import annotations

import numpy as np


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


class Polyline:
    """Piecewise-linear curve with arc-length parameterization.

    Precomputes segment vectors and cumulative arc length so projection and
    sampling are O(#segments) numpy operations.
    """

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least two 2D points")
        self.points = pts
        self.seg_vec = pts[1:] - pts[:-1]
        self.seg_len = np.linalg.norm(self.seg_vec, axis=1)
        if np.any(self.seg_len <= 0.0):
            raise ValueError("polyline has zero-length segment")
        self.cum_len = np.concatenate(([0.0], np.cumsum(self.seg_len)))
        self.length = float(self.cum_len[-1])
        self.seg_dir = self.seg_vec / self.seg_len[:, None]

    def project(self, point: np.ndarray) -> tuple[float, float, int]:
        """Project ``point`` onto the curve.

        Returns ``(s, lateral, seg_index)`` where ``s`` is arc length of the
        closest point and ``lateral`` is the signed offset (positive to the
        left of travel direction).
        """
        p = np.asarray(point, dtype=np.float64)
        rel = p[None, :] - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self.seg_vec) / (self.seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        closest = self.points[:-1] + t[:, None] * self.seg_vec
        d2 = np.sum((p[None, :] - closest) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = float(self.cum_len[i] + t[i] * self.seg_len[i])
        off = p - closest[i]
        lateral = float(_cross(self.seg_dir[i, 0], self.seg_dir[i, 1], off[0], off[1]))
        # cross of unit tangent with offset: magnitude equals distance only
        # when the offset is perpendicular; at clamped segment ends fall back
        # to the true distance with the cross-product sign.
        dist = float(np.sqrt(d2[i]))
        lateral = float(np.sign(lateral) if lateral != 0.0 else 1.0) * dist
        return s, lateral, i

    def point_at(self, s: float) -> np.ndarray:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self.cum_len, s, side="right") - 1)
        i = min(i, len(self.seg_len) - 1)
        t = (s - self.cum_len[i]) / self.seg_len[i]
        return self.points[i] + t * self.seg_vec[i]

    def heading_at(self, s: float) -> float:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self.cum_len, s, side="right") - 1)
        i = min(max(i, 0), len(self.seg_len) - 1)
        return float(np.arctan2(self.seg_dir[i, 1], self.seg_dir[i, 0]))

    def resample(self, spacing: float) -> np.ndarray:
        """Points every ``spacing`` meters of arc length, endpoint included."""
        if spacing <= 0.0:
            raise ValueError("spacing must be positive")
        svals = np.arange(0.0, self.length, spacing)
        svals = np.append(svals, self.length)
        return np.array([self.point_at(s) for s in svals])

    def offset_segments(self, offset: float) -> np.ndarray:
        """Segment endpoints of the curve shifted ``offset`` to the left.

        Returned as an (M, 4) array of (ax, ay, bx, by) rows. Each segment is
        shifted along its own normal; segments are not re-joined, which is
        adequate for ray casting against gently curving corridors.
        """
        normal = np.stack([-self.seg_dir[:, 1], self.seg_dir[:, 0]], axis=1)
        a = self.points[:-1] + offset * normal
        b = self.points[1:] + offset * normal
        return np.concatenate([a, b], axis=1)


def ray_segment_distances(
    origin: np.ndarray, directions: np.ndarray, segments: np.ndarray
) -> np.ndarray:
    """First-hit distance from ``origin`` along each ray to any segment.

    ``directions``: (R, 2) unit vectors. ``segments``: (M, 4) rows of
    (ax, ay, bx, by). Returns (R,) distances, inf where nothing is hit.
    """
    if segments.size == 0:
        return np.full(directions.shape[0], np.inf)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    rel = a - origin[None, :]
    # solve origin + t*d = a + u*e for each (ray, segment) pair
    denom = directions[:, 0, None] * e[None, :, 1] - directions[:, 1, None] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[None, :, 0] * e[None, :, 1] - rel[None, :, 1] * e[None, :, 0]) / denom
        u = (
            rel[None, :, 0] * directions[:, 1, None]
            - rel[None, :, 1] * directions[:, 0, None]
        ) / -denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def ray_disc_distances(
    origin: np.ndarray, directions: np.ndarray, centers: np.ndarray, radii: np.ndarray
) -> np.ndarray:
    """First-hit distance from ``origin`` along each ray to any disc surface.

    Returns (R,) distances, inf where no disc is hit. Rays starting inside a
    disc report distance 0.
    """
    if centers.size == 0:
        return np.full(directions.shape[0], np.inf)
    rel = centers[None, :, :] - origin[None, None, :]  # (1, D, 2)
    m = np.einsum("rk,rdk->rd", directions, np.broadcast_to(rel, (directions.shape[0], *rel.shape[1:])))
    q = np.sum(rel[0] ** 2, axis=1)[None, :] - radii[None, :] ** 2
    disc = m**2 - q
    with np.errstate(invalid="ignore"):
        t = m - np.sqrt(np.maximum(disc, 0.0))
    t = np.where((disc >= 0.0) & (t >= 0.0), t, np.inf)
    t = np.where(q <= 0.0, 0.0, t)  # origin inside disc
    return t.min(axis=1)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    return float(np.arctan2(np.sin(theta), np.cos(theta)))
