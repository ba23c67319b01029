"""Arc-length parameterized paths and 2D occupancy maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import wrap_angle

TIE_TOL = 1e-12


class Path:
    """Piecewise-linear path through near-uniformly spaced samples.

    Closed paths wrap arc length modulo their total length; the closing segment
    from the last sample back to the first is part of the path.
    """

    def __init__(self, samples, closed: bool = False):
        pts = np.asarray(samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("path needs at least two (x, y) samples")
        if closed and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        self.closed = closed
        self.samples = pts
        seg_pts = np.vstack([pts, pts[:1]]) if closed else pts
        seg = np.diff(seg_pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("consecutive samples must be distinct")
        self._seg_start = seg_pts[:-1]
        self._seg_vec = seg
        self._seg_len = seg_len
        self._seg_len2 = seg_len * seg_len
        self.cumulative_s = np.concatenate([[0.0], np.cumsum(seg_len)])[: len(pts)]
        self.length = float(seg_len.sum()) if closed else float(self.cumulative_s[-1])
        self._seg_s = self.cumulative_s if closed else self.cumulative_s[:-1]
        if closed:
            d = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
        else:
            d = np.gradient(pts, axis=0)
        self.headings = np.arctan2(d[:, 1], d[:, 0])

    def __len__(self):
        return len(self.samples)

    def wrap_s(self, s):
        if self.closed:
            return np.mod(s, self.length)
        return np.clip(s, 0.0, self.length)

    def _project_segments(self, pts: np.ndarray, idx: np.ndarray):
        """Closest point on each candidate segment; returns (dist2, s) of shape (P, S)."""
        a = self._seg_start[idx]
        v = self._seg_vec[idx]
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("psk,sk->ps", rel, v) / self._seg_len2[idx], 0.0, 1.0)
        foot = a[None] + t[..., None] * v[None]
        d2 = np.sum((pts[:, None, :] - foot) ** 2, axis=-1)
        s = self._seg_s[idx][None, :] + t * self._seg_len[idx][None, :]
        return d2, s

    def _candidates(self, s_hint: Optional[float], window: Optional[float]) -> np.ndarray:
        n = len(self._seg_len)
        if s_hint is None or window is None or (self.closed and 2 * window >= self.length):
            return np.arange(n)
        lo, hi = s_hint - window, s_hint + window
        if self.closed:
            rel = np.mod(self._seg_s - lo, self.length)
            keep = (rel <= hi - lo) | (np.mod(self._seg_s + self._seg_len - lo, self.length) <= hi - lo)
            idx = np.nonzero(keep)[0]
        else:
            i0 = max(int(np.searchsorted(self._seg_s, lo, side="right")) - 1, 0)
            i1 = min(int(np.searchsorted(self._seg_s, hi, side="right")), n)
            idx = np.arange(i0, max(i1, i0 + 1))
        return idx if idx.size else np.arange(n)

    def project_many(self, points, s_hint: Optional[float] = None, window: Optional[float] = None) -> np.ndarray:
        """Arc length of the closest path point for each query point.

        With ``s_hint``/``window`` only segments whose arc length lies within
        ``window`` of the hint are searched, which keeps projections on
        self-touching paths on the intended branch. Ties go to the smaller s.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self._candidates(s_hint, window)
        d2, s = self._project_segments(pts, idx)
        best = d2.min(axis=1, keepdims=True)
        tied = d2 <= best + TIE_TOL * np.maximum(1.0, best)
        s_masked = np.where(tied, s, np.inf)
        out = s_masked.min(axis=1)
        if self.closed:
            out = np.mod(out, self.length)
        return out

    def project(self, point, s_hint: Optional[float] = None, window: Optional[float] = None) -> float:
        return float(self.project_many(np.asarray(point, dtype=float)[None], s_hint, window)[0])

    def pose_at_many(self, s) -> np.ndarray:
        """(x, y, heading) rows for each arc length, clamped or wrapped."""
        s = self.wrap_s(np.atleast_1d(np.asarray(s, dtype=float)))
        n = len(self.samples)
        i = np.clip(np.searchsorted(self.cumulative_s, s, side="right") - 1, 0, n - 1)
        if not self.closed:
            i = np.minimum(i, n - 2)
        j = (i + 1) % n
        seg_len = self._seg_len[i]
        t = np.clip((s - self.cumulative_s[i]) / seg_len, 0.0, 1.0)
        p = self.samples[i] + t[:, None] * (self.samples[j] - self.samples[i])
        h0 = self.headings[i]
        dh = np.mod(self.headings[j] - h0 + np.pi, 2 * np.pi) - np.pi
        h = h0 + t * dh
        h = np.mod(h + np.pi, 2 * np.pi) - np.pi
        return np.column_stack([p, h])

    def pose_at(self, s: float) -> tuple[float, float, float]:
        x, y, h = self.pose_at_many([s])[0]
        return float(x), float(y), wrap_angle(float(h))

    def curvature(self) -> np.ndarray:
        """Discrete curvature (heading change per metre) between consecutive samples."""
        h = self.headings
        nxt = np.roll(h, -1) if self.closed else h[1:]
        cur = h if self.closed else h[:-1]
        seg = self._seg_len if self.closed else self._seg_len[: len(nxt)]
        return np.abs(np.mod(nxt - cur + np.pi, 2 * np.pi) - np.pi) / seg


def resample_polyline(points: np.ndarray, ds: float, closed: bool = False) -> np.ndarray:
    """Uniform arc-length resampling of a dense polyline."""
    pts = np.asarray(points, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(int(round(total / ds)), 1)
    s_new = np.linspace(0.0, total, n + 1)
    if closed:
        s_new = s_new[:-1]
    return np.column_stack([np.interp(s_new, s, pts[:, 0]), np.interp(s_new, s, pts[:, 1])])


def build_path(waypoints: Sequence, ds: float = 0.1, closed: bool = False) -> Path:
    """Cubic spline through waypoints, resampled every ``ds`` metres.

    Open paths use natural end conditions, closed paths a periodic spline.
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
        raise ValueError("need at least two (x, y) waypoints")
    if closed and np.allclose(wp[0], wp[-1]):
        wp = wp[:-1]
    chord = np.hypot(*np.diff(wp if not closed else np.vstack([wp, wp[:1]]), axis=0).T)
    if np.any(chord <= 1e-9):
        raise ValueError("duplicate consecutive waypoints")
    if len(wp) == 2 and not closed:
        total = float(chord[0])
        n = max(int(round(total / ds)), 1)
        t = np.linspace(0.0, 1.0, n + 1)
        return Path(wp[0] + t[:, None] * (wp[1] - wp[0]))
    if closed:
        if len(wp) < 3:
            raise ValueError("closed paths need at least three waypoints")
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        spline = CubicSpline(knots, np.vstack([wp, wp[:1]]), bc_type="periodic")
    else:
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        spline = CubicSpline(knots, wp, bc_type="natural")
    dense = spline(np.linspace(0.0, knots[-1], max(int(knots[-1] / ds) * 20, 200) + 1))
    if closed:
        dense = dense[:-1]
    return Path(resample_polyline(dense, ds, closed), closed=closed)


# path generators -----------------------------------------------------------

def straight_path(length: float = 200.0, ds: float = 0.1) -> Path:
    return build_path([(0.0, 0.0), (length, 0.0)], ds)


def sine_path(length: float = 200.0, amplitude: float = 4.0, wavelength: float = 60.0, ds: float = 0.1) -> Path:
    """Low-curvature sinusoid along +x."""
    x = np.linspace(0.0, length, int(length / ds) * 10 + 1)
    y = amplitude * np.sin(2 * np.pi * x / wavelength)
    return Path(resample_polyline(np.column_stack([x, y]), ds))


def infinity_loop(radius: float = 20.0, ds: float = 0.1) -> Path:
    """Two tangent circles of ``radius`` touching at the origin, traced as one closed loop."""
    n = max(int(round(2 * np.pi * radius / ds)), 8)
    t = np.arange(n) * (2 * np.pi / n)
    right = np.column_stack([radius - radius * np.cos(t), radius * np.sin(t)])
    left = np.column_stack([-radius + radius * np.cos(t), radius * np.sin(t)])
    return Path(np.vstack([right, left]), closed=True)


def stadium_path(straight: float = 60.0, radius: float = 15.0, ds: float = 0.1) -> Path:
    """Closed race-track loop: two straights joined by semicircles, counter-clockwise."""
    pieces = []
    n_s = max(int(round(straight / ds)), 1)
    n_c = max(int(round(np.pi * radius / ds)), 4)
    x = np.arange(n_s) * (straight / n_s)
    pieces.append(np.column_stack([x, np.zeros(n_s)]))
    t = np.arange(n_c) * (np.pi / n_c) - np.pi / 2
    pieces.append(np.column_stack([straight + radius * np.cos(t), radius + radius * np.sin(t)]))
    pieces.append(np.column_stack([straight - x, np.full(n_s, 2 * radius)]))
    t = np.arange(n_c) * (np.pi / n_c) + np.pi / 2
    pieces.append(np.column_stack([radius * np.cos(t), radius + radius * np.sin(t)]))
    return Path(np.vstack(pieces), closed=True)


# occupancy ------------------------------------------------------------------

@dataclass
class OccupancyMap:
    origin: tuple[float, float]
    resolution: float
    grid: np.ndarray  # (rows=y, cols=x) boolean

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=bool)
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise ValueError("grid must be a non-empty 2D array")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @classmethod
    def empty(cls, xmin, ymin, xmax, ymax, resolution=0.1) -> "OccupancyMap":
        cols = max(int(math.ceil((xmax - xmin) / resolution)), 1)
        rows = max(int(math.ceil((ymax - ymin) / resolution)), 1)
        return cls((xmin, ymin), resolution, np.zeros((rows, cols), dtype=bool))

    @property
    def extent(self) -> tuple[float, float, float, float]:
        rows, cols = self.grid.shape
        x0, y0 = self.origin
        return x0, y0, x0 + cols * self.resolution, y0 + rows * self.resolution

    def cell_centers(self):
        rows, cols = self.grid.shape
        x0, y0 = self.origin
        xs = x0 + (np.arange(cols) + 0.5) * self.resolution
        ys = y0 + (np.arange(rows) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def fill_rect(self, xmin, ymin, xmax, ymax, value=True):
        cx, cy = self.cell_centers()
        self.grid[(cx >= xmin) & (cx <= xmax) & (cy >= ymin) & (cy <= ymax)] = value

    def fill_disk(self, x, y, r, value=True):
        cx, cy = self.cell_centers()
        self.grid[(cx - x) ** 2 + (cy - y) ** 2 <= r * r] = value

    def fill_outside_path(self, path: Path, half_width: float):
        """Occupy every cell farther than ``half_width`` from the path polyline."""
        from scipy.spatial import cKDTree

        cx, cy = self.cell_centers()
        pts = np.column_stack([cx.ravel(), cy.ravel()])
        _, near = cKDTree(path.samples).query(pts)
        # exact distance to the two segments meeting at the nearest sample
        n_seg = len(path._seg_len)
        best = np.full(len(pts), np.inf)
        for shift in (-1, 0):
            seg = near + shift
            ok = (seg >= 0) & (seg < n_seg) if not path.closed else np.ones(len(pts), dtype=bool)
            seg = np.mod(seg, n_seg)
            a = path._seg_start[seg]
            v = path._seg_vec[seg]
            t = np.clip(np.sum((pts - a) * v, axis=1) / path._seg_len2[seg], 0.0, 1.0)
            d2 = np.sum((a + t[:, None] * v - pts) ** 2, axis=1)
            best = np.where(ok, np.minimum(best, d2), best)
        self.grid[(best > half_width * half_width).reshape(self.grid.shape)] = True

    def _rect_distance(self, px, py, rows, cols):
        x0, y0 = self.origin
        r = self.resolution
        lx = x0 + cols * r
        ly = y0 + rows * r
        dx = np.maximum(np.maximum(lx - px, px - (lx + r)), 0.0)
        dy = np.maximum(np.maximum(ly - py, py - (ly + r)), 0.0)
        return np.hypot(dx, dy)

    def point_blocked(self, px: float, py: float, radius: float) -> bool:
        xmin, ymin, xmax, ymax = self.extent
        if not (xmin <= px <= xmax and ymin <= py <= ymax):
            return True
        r = self.resolution
        x0, y0 = self.origin
        rows, cols = self.grid.shape
        c0 = max(int(math.floor((px - radius - x0) / r)) - 1, 0)
        c1 = min(int(math.floor((px + radius - x0) / r)) + 1, cols - 1)
        r0 = max(int(math.floor((py - radius - y0) / r)) - 1, 0)
        r1 = min(int(math.floor((py + radius - y0) / r)) + 1, rows - 1)
        sub = self.grid[r0:r1 + 1, c0:c1 + 1]
        if not sub.any():
            return False
        rr, cc = np.nonzero(sub)
        return bool(np.any(self._rect_distance(px, py, rr + r0, cc + c0) <= radius))


def path_clear(m: Optional[OccupancyMap], X, robot_radius: float) -> bool:
    """True iff no trajectory point's radius disk touches an occupied (or off-map) cell.

    A disk touches a cell when its center is within ``robot_radius`` of the
    cell's square (closed), so a zero radius point on an occupied cell's edge
    counts as blocked.
    """
    if robot_radius < 0:
        raise ValueError("robot_radius must be non-negative")
    if m is None:
        return True
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return not any(m.point_blocked(float(p[0]), float(p[1]), robot_radius) for p in X)
