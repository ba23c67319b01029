"""Per-agent convoy MPC: trajectory tracking fused with lead/follow slot costs.

Each agent sees only its own state, the latest snapshots of its two immediate
neighbours, the shared reference path and its configuration. Neighbour motion
is predicted by an open-loop constant-velocity rollout; the predicted
positions are projected onto the path and shifted by the desired gap to give
slot references, and the resulting quadratic penalties are fused with the
tracking penalty into one quadratic per horizon step before running iLQR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ilqr
from .dynamics import ControlInput, VehicleParams, VehicleState, rk4
from .geometry import OccupancyMap, Path, path_clear
from .ilqr import SolveResult, StageCost, TerminalCost
from .quadform import QuadFormError, QuadraticTerm, combine


def _diag(*v):
    return np.diag(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class ConvoyConfig:
    # tracking weights on [x, y, psi, v] and control weights on [a, delta]
    Q: np.ndarray = field(default_factory=lambda: _diag(0.5, 0.5, 2.0, 1.0))
    Q_f: np.ndarray = field(default_factory=lambda: _diag(1.0, 1.0, 4.0, 2.0))
    R: np.ndarray = field(default_factory=lambda: _diag(0.2, 2.0))
    # convoy slot weights, scaled at run time by the distance-adaptive factor
    Q_lead: np.ndarray = field(default_factory=lambda: _diag(4.0, 4.0, 0.0, 2.0))
    Q_follow: np.ndarray = field(default_factory=lambda: _diag(4.0, 4.0, 0.0, 2.0))
    lambda1: float = 1.0  # [s] gap growth with target speed
    lambda2: float = 0.2  # [s] gap growth with closing speed
    K_min: float = 2.0  # [m] minimum gap
    w_far: float = 1.0
    w_near: float = 2.0
    w_cap: float = 100.0
    N: int = 30
    dt: float = 0.1  # [s]
    v_t: float = 4.0  # [m/s]
    lambda3: float = 0.1  # [1/m]
    lambda4: float = 0.05  # [1/m]
    D_lookahead: float = 5.0  # [m]
    max_iter: int = 50
    tol: float = 1e-4
    robot_radius: float = 0.4  # [m] clearance used by the obstacle check
    # "travel": slot k sits at the neighbour's current projection plus the distance its
    # rollout has covered; "project": each predicted position is projected separately
    slot_progress: str = "travel"

    def __post_init__(self):
        for name in ("Q", "Q_f", "R", "Q_lead", "Q_follow"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be a symmetric square matrix")
            lo = np.linalg.eigvalsh(M)[0]
            if name == "R" and lo <= 0:
                raise ValueError("R must be positive definite")
            if lo < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, M)
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if not self.K_min > 0:
            raise ValueError("K_min must be positive")
        if self.w_far < 0 or self.w_near < 0:
            raise ValueError("weighting gains must be non-negative")
        if self.N < 2:
            raise ValueError("horizon N must be at least 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.slot_progress not in ("travel", "project"):
            raise ValueError("slot_progress must be 'travel' or 'project'")

    @property
    def steady_gap(self) -> float:
        return self.lambda1 * self.v_t + self.K_min


@dataclass(frozen=True)
class NeighborSnapshot:
    agent_id: int
    state: VehicleState
    timestamp: float


@dataclass
class ConvoyReference:
    lead_refs: Optional[np.ndarray]  # (N+1, 4) or None when there is no lead
    follow_refs: Optional[np.ndarray]

    @property
    def has_lead(self) -> bool:
        return self.lead_refs is not None

    @property
    def has_follow(self) -> bool:
        return self.follow_refs is not None


def desired_gap(cfg: ConvoyConfig, v_i: float, v_lead: float) -> float:
    d = cfg.lambda1 * cfg.v_t + cfg.lambda2 * (v_i - v_lead) + cfg.K_min
    return max(d, cfg.K_min)


def rollout_neighbor(snap: NeighborSnapshot, N: int, dt: float, params: VehicleParams) -> np.ndarray:
    """Constant-velocity, heading-hold prediction (a = 0, delta = 0) of a neighbour."""
    s = snap.state
    out = np.empty((N + 1, 4))
    x = (s.x, s.y, s.psi, s.v)
    out[0] = x
    for k in range(N):
        x = rk4(*x, 0.0, 0.0, dt, params.wheelbase, params.v_min, params.v_max)
        out[k + 1] = x
    return out


def advance_snapshot(snap: NeighborSnapshot, now: float, params: VehicleParams) -> NeighborSnapshot:
    """Carry a delayed snapshot forward to ``now`` with the same rollout model."""
    age = now - snap.timestamp
    if age <= 1e-12:
        return snap
    s = snap.state
    x = rk4(s.x, s.y, s.psi, s.v, 0.0, 0.0, age, params.wheelbase, params.v_min, params.v_max)
    return NeighborSnapshot(snap.agent_id, VehicleState(*x), now)


def _unwrap_near(h: np.ndarray, ref: float) -> np.ndarray:
    h = np.unwrap(h)
    return h - 2 * np.pi * np.round((h[0] - ref) / (2 * np.pi))


def _slot_refs(path: Path, traj: np.ndarray, s_hint: float, window: float, offset: float,
               speed: float, params: VehicleParams, psi_ref: float, mode: str = "travel") -> np.ndarray:
    s_first = path.project(traj[0, :2], s_hint=s_hint, window=window)
    steps = np.hypot(*np.diff(traj[:, :2], axis=0).T)
    travelled = np.concatenate([[0.0], np.cumsum(steps)])
    if mode == "travel":
        s = s_first + travelled
    else:
        # later points stay within the rollout's own span ahead of the first projection
        span = float(travelled[-1])
        s = path.project_many(traj[:, :2], s_hint=s_first + span / 2, window=span / 2 + 1.0)
        s[0] = s_first
        if path.closed:
            s = s[0] + np.concatenate([[0.0], np.cumsum(np.mod(np.diff(s) + path.length / 2, path.length)
                                                       - path.length / 2)])
    poses = path.pose_at_many(s + offset)
    v = min(max(speed, params.v_min), params.v_max)
    return np.column_stack([poses[:, :2], _unwrap_near(poses[:, 2], psi_ref), np.full(len(s), v)])


def place_references(path: Path, lead_traj: Optional[np.ndarray], follow_traj: Optional[np.ndarray],
                     d_ref_lead: float, d_ref_follow: float, cfg: ConvoyConfig,
                     params: VehicleParams = VehicleParams(), lead_hint: Optional[float] = None,
                     follow_hint: Optional[float] = None, window: Optional[float] = None,
                     psi_ref: Optional[float] = None) -> ConvoyReference:
    """Slot references: ``d_ref_lead`` behind the predicted lead, ``d_ref_follow`` ahead of the follower.

    Each returned array has one row per predicted neighbour state (N+1 rows)
    with position and heading read from the path and speed equal to the
    neighbour's current speed.
    """
    if path is None or len(path) < 2:
        raise ValueError("empty path")
    if lead_traj is None and follow_traj is None:
        raise ValueError("at least one neighbour must be present")
    lead = follow = None
    if lead_traj is not None:
        ref = lead_traj[0, 2] if psi_ref is None else psi_ref
        lead = _slot_refs(path, lead_traj, lead_hint, window, -d_ref_lead, lead_traj[0, 3], params, ref,
                          cfg.slot_progress)
    if follow_traj is not None:
        ref = follow_traj[0, 2] if psi_ref is None else psi_ref
        follow = _slot_refs(path, follow_traj, follow_hint, window, d_ref_follow, follow_traj[0, 3], params, ref,
                            cfg.slot_progress)
    return ConvoyReference(lead, follow)


def weight_factor(dist: float, d_ref: float, w_far: float, w_near: float,
                  w_cap: float = 100.0, eps: float = 0.01) -> float:
    """Distance-adaptive multiplier on a convoy weight; 1 at dist == d_ref."""
    if dist < eps:
        return w_cap
    if dist >= d_ref:
        w = 1.0 + w_far * (dist - d_ref) / dist
    else:
        w = 1.0 + w_near * (d_ref - dist) / dist
    return min(w, w_cap)


def tracking_references(path: Path, s0: float, speed: float, N: int, dt: float, psi_ref: float) -> np.ndarray:
    """Path poses advancing at ``speed`` from arc length ``s0``; (N+1, 4)."""
    s = s0 + speed * dt * np.arange(N + 1)
    poses = path.pose_at_many(s)
    if not path.closed and s[-1] > path.length:
        # run straight off the end rather than piling references on the endpoint
        over = np.maximum(s - path.length, 0.0)
        h_end = poses[-1, 2]
        poses[:, 0] += over * np.cos(h_end)
        poses[:, 1] += over * np.sin(h_end)
    return np.column_stack([poses[:, :2], _unwrap_near(poses[:, 2], psi_ref), np.full(N + 1, speed)])


def assemble_stage_costs(path: Path, ref: ConvoyReference, x_traj: np.ndarray, cfg: ConvoyConfig,
                         w_lead: float = 1.0, w_follow: float = 1.0):
    """Fuse tracking and convoy penalties into per-step stage costs plus a terminal cost."""
    N = x_traj.shape[0] - 1
    Ql = w_lead * cfg.Q_lead
    Qf = w_follow * cfg.Q_follow
    stage = []
    terminal = None
    for k in range(N + 1):
        terms = [QuadraticTerm(cfg.Q if k < N else cfg.Q_f, x_traj[k])]
        if ref.has_lead:
            terms.append(QuadraticTerm(Ql, ref.lead_refs[k]))
        if ref.has_follow:
            terms.append(QuadraticTerm(Qf, ref.follow_refs[k]))
        try:
            q = combine(terms, check=False)
            q.center
        except QuadFormError as exc:
            raise QuadFormError(f"all convoy and tracking weights vanish at step {k}") from exc
        if k < N:
            stage.append(StageCost(q, cfg.R))
        else:
            terminal = TerminalCost(q)
    return stage, terminal


def assemble_horizon(ref: ConvoyReference, x_traj: np.ndarray, cfg: ConvoyConfig,
                     w_lead: float = 1.0, w_follow: float = 1.0) -> ilqr.Horizon:
    """Vectorized equivalent of :func:`assemble_stage_costs` in the solver's array form."""
    N = x_traj.shape[0] - 1
    Qs = np.broadcast_to(cfg.Q, (N + 1, 4, 4)).copy()
    Qs[N] = cfg.Q_f
    Q_T = Qs.copy()
    y = np.einsum("kij,kj->ki", Qs, x_traj)
    Z = np.einsum("ki,ki->k", x_traj, y)
    for refs, W in ((ref.lead_refs, w_lead * cfg.Q_lead), (ref.follow_refs, w_follow * cfg.Q_follow)):
        if refs is None:
            continue
        Q_T += W
        yi = refs @ W  # W symmetric
        y += yi
        Z += np.einsum("ki,ki->k", refs, yi)
    try:
        np.linalg.cholesky(Q_T)
    except np.linalg.LinAlgError as exc:
        raise QuadFormError("all convoy and tracking weights vanish on the horizon") from exc
    c = np.linalg.solve(Q_T, y[..., None])[..., 0]
    r = Z - np.einsum("ki,ki->k", y, c)
    return ilqr.Horizon(Q_T, c, r, np.broadcast_to(cfg.R, (N, 2, 2)).copy())


def shift_warm_start(U: Optional[np.ndarray], elapsed: float, dt: float, N: int) -> np.ndarray:
    """Previous plan advanced by ``elapsed`` seconds, last control held."""
    if U is None:
        return np.zeros((N, 2))
    U = np.asarray(U)
    t_old = np.arange(U.shape[0]) * dt
    t_new = elapsed + np.arange(N) * dt
    return np.column_stack([np.interp(t_new, t_old, U[:, j]) for j in range(U.shape[1])])


def compute_control(own: VehicleState, lead: Optional[NeighborSnapshot], follow: Optional[NeighborSnapshot],
                    path: Path, cfg: ConvoyConfig, params: VehicleParams = VehicleParams(),
                    warm: Optional[np.ndarray] = None, s_hint: Optional[float] = None,
                    now: Optional[float] = None) -> SolveResult:
    """One convoy MPC solve. The plan's ``info`` dict carries the intermediate quantities."""
    if path is None or len(path) < 2:
        raise ValueError("empty path")
    N, dt = cfg.N, cfg.dt
    if now is not None:
        lead = advance_snapshot(lead, now, params) if lead is not None else None
        follow = advance_snapshot(follow, now, params) if follow is not None else None

    s_own = path.project(own.position, s_hint=s_hint, window=None if s_hint is None else 10.0)
    x_traj = tracking_references(path, s_own, cfg.v_t, N, dt, own.psi)

    info = dict(s_own=s_own, w_lead=float("nan"), w_follow=float("nan"),
                d_ref_lead=float("nan"), d_ref_follow=float("nan"),
                d1=float("nan"), d2=float("nan"))
    lead_traj = follow_traj = None
    lead_hint = follow_hint = None
    w_lead = w_follow = 1.0
    d_ref_lead = d_ref_follow = cfg.steady_gap
    if lead is not None:
        d_ref_lead = desired_gap(cfg, own.v, lead.state.v)
        dist = math.hypot(lead.state.x - own.x, lead.state.y - own.y)
        w_lead = weight_factor(dist, d_ref_lead, cfg.w_far, cfg.w_near, cfg.w_cap)
        lead_traj = rollout_neighbor(lead, N, dt, params)
        lead_hint = s_own + dist
        info.update(w_lead=w_lead, d_ref_lead=d_ref_lead)
    if follow is not None:
        d_ref_follow = desired_gap(cfg, follow.state.v, own.v)
        dist = math.hypot(follow.state.x - own.x, follow.state.y - own.y)
        w_follow = weight_factor(dist, d_ref_follow, cfg.w_far, cfg.w_near, cfg.w_cap)
        follow_traj = rollout_neighbor(follow, N, dt, params)
        follow_hint = s_own - dist
        info.update(w_follow=w_follow, d_ref_follow=d_ref_follow)

    if lead_traj is None and follow_traj is None:
        ref = ConvoyReference(None, None)
    else:
        span = max(cfg.v_t, own.v) * N * dt
        window = None
        if lead_hint is not None or follow_hint is not None:
            window = span + 10.0 + max(abs((lead_hint or s_own) - s_own), abs((follow_hint or s_own) - s_own))
        ref = place_references(path, lead_traj, follow_traj, d_ref_lead, d_ref_follow, cfg, params,
                               lead_hint=lead_hint, follow_hint=follow_hint, window=window, psi_ref=own.psi)
        if ref.has_lead:
            s_lead = path.project(lead_traj[0, :2], s_hint=lead_hint, window=window)
            info["d1"] = _ahead(path, s_own, s_lead)
        if ref.has_follow:
            s_fol = path.project(follow_traj[0, :2], s_hint=follow_hint, window=window)
            info["d2"] = _ahead(path, s_fol, s_own)

    horizon = assemble_horizon(ref, x_traj, cfg, w_lead, w_follow)
    u_init = np.zeros((N, 2)) if warm is None else np.asarray(warm, dtype=float)
    result = ilqr.solve(own, u_init, horizon, None, params, dt, max_iter=cfg.max_iter, tol=cfg.tol)
    result.info = info
    result.info["reference"] = ref
    result.info["x_traj"] = x_traj
    return result


def _ahead(path: Path, s_back: float, s_front: float) -> float:
    d = s_front - s_back
    if path.closed:
        d = (d + path.length / 2) % path.length - path.length / 2
    return d


class ConvoyAgent:
    """Algorithm-1 controller for one robot: convoy MPC with a local-planner fallback."""

    uses_follower = True

    def __init__(self, path: Path, cfg: ConvoyConfig, params: VehicleParams = VehicleParams(),
                 occupancy: Optional[OccupancyMap] = None):
        self.path = path
        self.cfg = cfg
        self.params = params
        self.occupancy = occupancy
        self._U = None
        self._t_last = None
        self._s_hint = None
        self.last = {}

    def act(self, own: VehicleState, lead: Optional[NeighborSnapshot], follow: Optional[NeighborSnapshot],
            now: float) -> ControlInput:
        from . import local_planner  # deferred: local_planner imports this module

        cfg = self.cfg
        elapsed = 0.0 if self._t_last is None else now - self._t_last
        warm = shift_warm_start(self._U, elapsed, cfg.dt, cfg.N) if self._U is not None else None
        plan = compute_control(own, lead, follow, self.path, cfg, self.params, warm=warm,
                               s_hint=self._s_hint, now=now)
        info = plan.info
        self._s_hint = info["s_own"]
        self._t_last = now
        fallback = False
        U = plan.U
        if self.occupancy is not None and not path_clear(self.occupancy, plan.X[:, :2], cfg.robot_radius):
            fallback = True
            U = local_planner.fallback_controls(own, plan, info, cfg, self.params, self.occupancy)
        self._U = U
        self.last = dict(fallback=fallback, w_lead=info["w_lead"], w_follow=info["w_follow"],
                         plan=plan)
        return ControlInput(float(U[0, 0]), float(U[0, 1]))
