"""Obstacle fallback: constant-curvature arc fan, target-direction scoring, tracking iLQR.

Used when the convoy plan is not obstacle free. The target direction comes from
a look-ahead point on the convoy plan and the target speed is corrected by the
along-path distances to the lead and follow robots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ilqr
from .convoy import ConvoyConfig, _unwrap_near, shift_warm_start
from .dynamics import VehicleParams, VehicleState
from .geometry import OccupancyMap, Path, path_clear
from .ilqr import SolveResult, StageCost, TerminalCost
from .quadform import QuadraticTerm, combine

N_ARCS = 31
N_GROUPS = 7
A_LAT_MAX = 4.0  # [m/s^2] lateral acceleration bounding fan curvature at speed


@dataclass
class ArcFan:
    arcs: list  # list[Path]
    curvatures: np.ndarray
    group_of: np.ndarray  # arc index -> group id
    length: float


@dataclass
class PlannerDecision:
    chosen_path: Optional[Path]
    v_T: float
    theta_T: float
    fallback_active: bool = True
    curvature: float = 0.0

    @property
    def is_stop(self) -> bool:
        return self.chosen_path is None


def scaled_velocity(cfg: ConvoyConfig, v_tc: float, d1: float, d2: float, d_ref: float,
                    v_max: float = VehicleParams().v_max) -> float:
    """Target speed (1 + alpha) v_tc with alpha = lambda3 (d1 - d_ref) - lambda4 d2, clamped to [0, v_max]."""
    alpha = cfg.lambda3 * (d1 - d_ref) - cfg.lambda4 * d2
    return min(max((1.0 + alpha) * v_tc, 0.0), v_max)


def lookahead_direction(convoy_plan: np.ndarray, D_lookahead: float, own: VehicleState) -> float:
    """Bearing from ``own`` to the first plan point at least ``D_lookahead`` along the plan."""
    P = np.atleast_2d(np.asarray(convoy_plan, dtype=float))[:, :2]
    if len(P) == 0:
        raise ValueError("empty plan")
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(P, axis=0).T))])
    hit = np.nonzero(s >= D_lookahead)[0]
    target = P[hit[0]] if hit.size else P[-1]
    return math.atan2(target[1] - own.y, target[0] - own.x)


def _arc_points(own: VehicleState, kappa: float, length: float, ds: float) -> np.ndarray:
    s = np.linspace(0.0, length, max(int(math.ceil(length / ds)), 2) + 1)
    if abs(kappa) < 1e-9:
        dx, dy = s, np.zeros_like(s)
    else:
        dx = np.sin(kappa * s) / kappa
        dy = (1.0 - np.cos(kappa * s)) / kappa
    c, sn = math.cos(own.psi), math.sin(own.psi)
    return np.column_stack([own.x + c * dx - sn * dy, own.y + sn * dx + c * dy])


def build_fan(own: VehicleState, v: float, params: VehicleParams, n_arcs: int = N_ARCS,
              n_groups: int = N_GROUPS, ds: float = 0.1) -> ArcFan:
    if n_arcs % 2 == 0:
        raise ValueError("arc count must be odd so the center arc is straight")
    k_max = min(params.max_curvature, A_LAT_MAX / max(v, 1.0) ** 2)
    length = max(3.0, 1.5 * v)
    kappas = np.linspace(-k_max, k_max, n_arcs)
    kappas[n_arcs // 2] = 0.0
    edges = np.linspace(-k_max, k_max, n_groups + 1)
    group = np.clip(np.searchsorted(edges, kappas, side="right") - 1, 0, n_groups - 1)
    arcs = [Path(_arc_points(own, k, length, ds)) for k in kappas]
    return ArcFan(arcs, kappas, group, length)


def plan(own: VehicleState, occupancy: Optional[OccupancyMap], theta_T: float, v_T: float,
         fan: ArcFan, robot_radius: float = 0.4) -> PlannerDecision:
    """Pick the best-aligned arc from the best-scoring group of collision-free arcs."""
    free = np.array([path_clear(occupancy, a.samples, robot_radius) for a in fan.arcs])
    if not free.any():
        return PlannerDecision(None, 0.0, theta_T)
    ends = np.array([a.samples[-1] for a in fan.arcs])
    bearing = np.arctan2(ends[:, 1] - own.y, ends[:, 0] - own.x)
    score = np.cos(bearing - theta_T)
    n_groups = int(fan.group_of.max()) + 1
    group_score = np.full(n_groups, -np.inf)
    for g in range(n_groups):
        members = free & (fan.group_of == g)
        if members.any():
            group_score[g] = score[members].sum()
    best_group = int(np.argmax(group_score))
    cand = np.nonzero(free & (fan.group_of == best_group))[0]
    # highest score, ties toward the straighter arc
    order = sorted(cand, key=lambda i: (-round(float(score[i]), 12), abs(float(fan.curvatures[i]))))
    i = order[0]
    return PlannerDecision(fan.arcs[i], v_T, theta_T, True, float(fan.curvatures[i]))


def follow(decision: PlannerDecision, own: VehicleState, cfg: ConvoyConfig,
           params: VehicleParams = VehicleParams(), warm=None) -> SolveResult:
    """Pure tracking iLQR along the chosen arc at the planner's target speed."""
    if decision.is_stop:
        raise ValueError("cannot follow a stop decision")
    path = decision.chosen_path
    N, dt = cfg.N, cfg.dt
    s = path.project(own.position) + decision.v_T * dt * np.arange(N + 1)
    poses = path.pose_at_many(s)
    over = np.maximum(s - path.length, 0.0)
    poses[:, 0] += over * np.cos(poses[-1, 2]) * (over > 0)
    poses[:, 1] += over * np.sin(poses[-1, 2]) * (over > 0)
    refs = np.column_stack([poses[:, :2], _unwrap_near(poses[:, 2], own.psi), np.full(N + 1, decision.v_T)])
    stage = [StageCost(combine([QuadraticTerm(cfg.Q, refs[k])], check=False), cfg.R) for k in range(N)]
    terminal = TerminalCost(combine([QuadraticTerm(cfg.Q_f, refs[N])], check=False))
    u0 = np.zeros((N, 2)) if warm is None else warm
    return ilqr.solve(own, u0, stage, terminal, params, dt, max_iter=cfg.max_iter, tol=cfg.tol)


def fallback_controls(own: VehicleState, convoy_plan: SolveResult, info: dict, cfg: ConvoyConfig,
                      params: VehicleParams, occupancy: OccupancyMap, lead_only: bool = False) -> np.ndarray:
    """Fallback branch of the convoy loop; returns a control sequence (N, 2)."""
    X = convoy_plan.X
    theta_T = lookahead_direction(X, cfg.D_lookahead, own)
    P = X[:, :2]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(P, axis=0).T))])
    idx = min(int(np.searchsorted(s, cfg.D_lookahead)), len(X) - 1)
    v_tc = float(X[idx, 3])
    d_ref = info.get("d_ref_lead", float("nan"))
    d1 = info.get("d1", float("nan"))
    d2 = info.get("d2", float("nan"))
    if not math.isfinite(d1) or not math.isfinite(d_ref):
        d1, d_ref = 0.0, 0.0
    if lead_only or not math.isfinite(d2):
        d2 = 0.0
    v_T = scaled_velocity(cfg, v_tc, d1, d2, d_ref, params.v_max)
    fan = build_fan(own, max(v_T, own.v), params)
    decision = plan(own, occupancy, theta_T, v_T, fan, cfg.robot_radius)
    info["planner"] = decision
    if decision.is_stop:
        U = np.zeros((cfg.N, 2))
        U[:, 0] = -params.a_max
        return U
    return follow(decision, own, cfg, params, warm=convoy_plan.U).U
