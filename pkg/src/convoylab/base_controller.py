"""Comparison baseline: reactive leader-follower control with lead-only coupling.

Followers store the lead robot's positions as a breadcrumb trace, steer with
pure pursuit toward a speed-dependent look-ahead point on that trace, and set
acceleration with a spring-damper on the along-trace gap to the lead. The head
of the convoy runs the same pure-pursuit law on the reference path with a
proportional speed loop. The obstacle fallback is shared with the convoy
controller. Nothing here ever reads the follower's state.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convoy import ConvoyConfig, NeighborSnapshot
from .dynamics import ControlInput, VehicleParams, VehicleState
from .geometry import OccupancyMap, Path, path_clear
from . import local_planner


@dataclass(frozen=True)
class BaseConfig:
    k_spring: float = 4.0  # [1/s^2] gap stiffness, from scripts/tune_base.py
    k_damp: float = 4.0  # [1/s] relative-speed damping; 2 sqrt(k_spring) is critical
    k_speed: float = 1.0  # [1/s] head-of-convoy speed loop
    lookahead_gain: float = 0.5  # [s] look-ahead distance = gain * v
    lookahead_min: float = 1.5  # [m]
    d_desired: float = 6.0  # [m]
    trace_ds: float = 0.5  # [m]
    capacity: int = 400

    def __post_init__(self):
        if min(self.k_spring, self.k_damp, self.k_speed, self.lookahead_gain) < 0:
            raise ValueError("gains must be non-negative")
        if not self.d_desired > 0:
            raise ValueError("d_desired must be positive")
        if not self.trace_ds > 0 or self.capacity < 2:
            raise ValueError("bad trace settings")

    @classmethod
    def critically_damped(cls, k_spring: float, **kw) -> "BaseConfig":
        return cls(k_spring=k_spring, k_damp=2.0 * math.sqrt(k_spring), **kw)


class LeaderTrace:
    """Bounded breadcrumb trail of a lead robot's timestamped positions."""

    def __init__(self, capacity: int = 400, trace_ds: float = 0.5):
        self.capacity = capacity
        self.trace_ds = trace_ds
        self.points: deque = deque(maxlen=capacity)  # (t, x, y)

    def __len__(self):
        return len(self.points)

    def record(self, snap: NeighborSnapshot) -> "LeaderTrace":
        t, x, y = snap.timestamp, snap.state.x, snap.state.y
        if self.points:
            t0, x0, y0 = self.points[-1]
            if t <= t0 or math.hypot(x - x0, y - y0) < self.trace_ds:
                return self
        self.points.append((t, x, y))
        return self

    def drop_passed(self, n: int) -> None:
        """Forget the ``n`` oldest breadcrumbs (already driven past)."""
        for _ in range(min(n, len(self.points) - 1)):
            self.points.popleft()

    def xy(self) -> np.ndarray:
        return np.array([(x, y) for _, x, y in self.points]).reshape(-1, 2)


def _polyline_projection(P: np.ndarray, q: np.ndarray):
    """(segment index, fraction, arc length at the projection) of q on polyline P."""
    if len(P) == 1:
        return 0, 0.0, 0.0
    a = P[:-1]
    v = np.diff(P, axis=0)
    L2 = np.maximum(np.sum(v * v, axis=1), 1e-12)
    t = np.clip(np.sum((q - a) * v, axis=1) / L2, 0.0, 1.0)
    foot = a + t[:, None] * v
    d2 = np.sum((foot - q) ** 2, axis=1)
    i = int(np.argmin(d2))
    seg = np.sqrt(L2)
    s = float(np.sum(seg[:i]) + t[i] * seg[i])
    return i, float(t[i]), s


def _point_along(P: np.ndarray, s: float) -> np.ndarray:
    seg = np.hypot(*np.diff(P, axis=0).T)
    cs = np.concatenate([[0.0], np.cumsum(seg)])
    if s >= cs[-1]:
        return P[-1]
    i = int(np.searchsorted(cs, s, side="right") - 1)
    t = (s - cs[i]) / seg[i]
    return P[i] + t * (P[i + 1] - P[i])


def pure_pursuit(own: VehicleState, target: np.ndarray, params: VehicleParams) -> float:
    """Steering angle that puts the rear axle on a circle through ``target``."""
    dx, dy = target[0] - own.x, target[1] - own.y
    ld = math.hypot(dx, dy)
    if ld < 1e-6:
        return 0.0
    alpha = math.atan2(dy, dx) - own.psi
    delta = math.atan2(2.0 * params.wheelbase * math.sin(alpha), ld)
    return min(max(delta, -params.delta_max), params.delta_max)


def trace_gap(own: VehicleState, trace: LeaderTrace, lead: NeighborSnapshot):
    """Along-trace distance to the lead, the trace polyline ending at the lead,
    own arc position on it and the index of the segment own projects onto."""
    P = np.vstack([trace.xy(), [[lead.state.x, lead.state.y]]])
    i, _, s_own = _polyline_projection(P, np.array([own.x, own.y]))
    total = float(np.sum(np.hypot(*np.diff(P, axis=0).T))) if len(P) > 1 else 0.0
    return total - s_own, P, s_own, i


def base_control(own: VehicleState, trace: LeaderTrace, lead: Optional[NeighborSnapshot], cfg: BaseConfig,
                 params: VehicleParams = VehicleParams()) -> ControlInput:
    """Pure pursuit on the lead trace plus spring-damper spacing on the lead only."""
    if lead is None or len(trace) == 0:
        return params.clamp(ControlInput(-cfg.k_damp * own.v, 0.0))
    gap, P, s_own, _ = trace_gap(own, trace, lead)
    ld = max(cfg.lookahead_gain * own.v, cfg.lookahead_min)
    target = _point_along(P, s_own + ld)
    delta = pure_pursuit(own, target, params)
    a = cfg.k_spring * (gap - cfg.d_desired) - cfg.k_damp * (own.v - lead.state.v)
    return params.clamp(ControlInput(a, delta))


def head_control(own: VehicleState, path: Path, s_own: float, v_t: float, cfg: BaseConfig,
                 params: VehicleParams = VehicleParams()) -> ControlInput:
    """Head-of-convoy law: pure pursuit on the reference path and a speed loop."""
    ld = max(cfg.lookahead_gain * own.v, cfg.lookahead_min)
    x, y, _ = path.pose_at(s_own + ld)
    delta = pure_pursuit(own, np.array([x, y]), params)
    return params.clamp(ControlInput(cfg.k_speed * (v_t - own.v), delta))


class BaseAgent:
    """Per-robot baseline controller. ``act`` takes no follower argument by design."""

    uses_follower = False

    def __init__(self, path: Path, cfg: BaseConfig, convoy_cfg: ConvoyConfig,
                 params: VehicleParams = VehicleParams(), occupancy: Optional[OccupancyMap] = None,
                 is_head: bool = False):
        self.path = path
        self.cfg = cfg
        self.convoy_cfg = convoy_cfg
        self.params = params
        self.occupancy = occupancy
        self.is_head = is_head
        self.trace = LeaderTrace(cfg.capacity, cfg.trace_ds)
        self._s_hint = None
        self.last = {}

    def act(self, own: VehicleState, lead: Optional[NeighborSnapshot], now: float) -> ControlInput:
        ccfg = self.convoy_cfg
        gap = float("nan")
        if self.is_head:
            s = self.path.project(own.position, s_hint=self._s_hint, window=None if self._s_hint is None else 10.0)
            self._s_hint = s
            u = head_control(own, self.path, s, ccfg.v_t, self.cfg, self.params)
        else:
            if lead is not None:
                if not len(self.trace):
                    # breadcrumbs start at our own position so the first gap is the straight line
                    self.trace.points.append((lead.timestamp - 1e-3, own.x, own.y))
                self.trace.record(lead)
            u = base_control(own, self.trace, lead, self.cfg, self.params)
            if lead is not None and len(self.trace):
                gap, _, _, seg = trace_gap(own, self.trace, lead)
                self.trace.drop_passed(seg - 1)
        fallback = False
        if self.occupancy is not None:
            X = _constant_rollout(own, u, ccfg.N, ccfg.dt, self.params)
            if not path_clear(self.occupancy, X[:, :2], ccfg.robot_radius):
                fallback = True
                u = self._fallback(own, lead, u, X, gap, now)
        self.last = dict(fallback=fallback, w_lead=float("nan"), w_follow=float("nan"))
        return u

    def _fallback(self, own, lead, u, X, gap, now) -> ControlInput:
        ccfg = self.convoy_cfg
        if self.is_head:
            s = self._s_hint
            pts = self.path.pose_at_many(s + np.linspace(0.0, 2 * ccfg.D_lookahead, 21))
            target_plan = np.vstack([[own.x, own.y], pts[:, :2]])
            v_tc = ccfg.v_t
        else:
            if lead is None or not len(self.trace):
                return u
            _, P, s_own, _ = trace_gap(own, self.trace, lead)
            pts = [_point_along(P, s_own + d) for d in np.linspace(0.0, 2 * ccfg.D_lookahead, 21)]
            target_plan = np.vstack([[own.x, own.y], pts])
            v_tc = max(lead.state.v, 0.0)
        plan = _Plan(np.column_stack([target_plan, np.zeros(len(target_plan)), np.full(len(target_plan), v_tc)]),
                     np.zeros((ccfg.N, 2)))
        info = dict(d1=gap, d_ref_lead=self.cfg.d_desired, d2=0.0)
        U = local_planner.fallback_controls(own, plan, info, ccfg, self.params, self.occupancy, lead_only=True)
        return ControlInput(float(U[0, 0]), float(U[0, 1]))


@dataclass
class _Plan:
    X: np.ndarray
    U: np.ndarray


def _constant_rollout(own: VehicleState, u: ControlInput, N: int, dt: float, params: VehicleParams) -> np.ndarray:
    from .dynamics import rk4

    out = np.empty((N + 1, 4))
    x = (own.x, own.y, own.psi, own.v)
    out[0] = x
    for k in range(N):
        x = rk4(*x, u.a, u.delta, dt, params.wheelbase, params.v_min, params.v_max)
        out[k + 1] = x
    return out
