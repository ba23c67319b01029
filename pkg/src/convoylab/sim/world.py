"""Deterministic lockstep multi-agent world."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .. import metrics
from ..base_controller import BaseAgent
from ..convoy import ConvoyAgent, NeighborSnapshot
from ..dynamics import ControlInput, VehicleParams, VehicleState, step
from .bus import MessageBus
from .scenario import Scenario, base_config, build_world, convoy_config, initial_states

CSV_COLUMNS = ("tick", "time", "agent", "x", "y", "psi", "v", "a", "delta", "fallback",
               "dist_to_lead", "dist_to_follow", "e_m1", "e_m2", "w_lead", "w_follow")


@dataclass(frozen=True)
class TickLog:
    tick: int
    time: float
    agent: int
    x: float
    y: float
    psi: float
    v: float
    a: float
    delta: float
    fallback: bool
    dist_to_lead: float  # along path
    dist_to_follow: float
    e_m1: float
    e_m2: float
    w_lead: float
    w_follow: float
    euclid_to_lead: float = math.nan
    euclid_to_follow: float = math.nan
    progress: float = math.nan  # unwrapped arc length along the path


@dataclass
class RunResult:
    scenario: Scenario
    logs: list
    collision: bool
    collision_time: Optional[float]
    summary: metrics.RunSummary
    solve_times: dict = field(default_factory=dict)  # agent -> list of seconds
    final_progress: list = field(default_factory=list)

    def csv_text(self) -> str:
        return logs_to_csv(self.logs)

    def summary_json(self) -> str:
        d = self.summary.as_dict()
        d.update(collision_time=self.collision_time, seed=self.scenario.seed, agents=self.scenario.agents,
                 d_desired=convoy_config(self.scenario).steady_gap, warmup=self.scenario.warmup)
        return json.dumps(_jsonable(d), indent=2, sort_keys=True)


def _jsonable(d):
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def logs_to_csv(logs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in logs:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def make_agents(scn: Scenario, path, occupancy, params: VehicleParams, controller: Optional[str] = None):
    controller = controller or scn.controller
    ccfg = convoy_config(scn)
    if controller == "convoy":
        return [ConvoyAgent(path, ccfg, params, occupancy) for _ in range(scn.agents)]
    bcfg = base_config(scn)
    return [BaseAgent(path, bcfg, ccfg, params, occupancy, is_head=(i == 0)) for i in range(scn.agents)]


def _advance_progress(path, s_prev: float, pos) -> float:
    if path.closed:
        s = path.project(pos, s_hint=float(path.wrap_s(s_prev)), window=5.0)
        d = (s - s_prev + path.length / 2) % path.length - path.length / 2
        return s_prev + d
    return path.project(pos, s_hint=s_prev, window=5.0)


def run(scn: Scenario, agent_factory: Optional[Callable] = None, clock=time.perf_counter) -> RunResult:
    """Simulate ``scn`` to its duration or the first collision.

    Per tick: publish and deliver snapshots, compute every agent's control from
    its own state and delivered neighbour snapshots, apply scenario events,
    step the dynamics and append the log.
    """
    path, occupancy = build_world(scn)
    params = VehicleParams(v_max=scn.vehicle_v_max)
    states, progress = initial_states(scn, path)
    L = scn.agents
    agents = (agent_factory or make_agents)(scn, path, occupancy, params)
    d_desired = convoy_config(scn).steady_gap
    links = [(i, i + 1) for i in range(1, L)] + [(i + 1, i) for i in range(1, L)]
    bus = MessageBus(scn.bus, links, scn.seed)
    step_params = [params] * L
    for ev in scn.events:
        if ev.kind == "speed_cap" and ev.t_start <= 0.0:
            step_params[ev.agent - 1] = replace(params, v_max=min(params.v_max, ev.v_cap))
    caps = [ev for ev in scn.events if ev.kind == "speed_cap" and ev.t_start > 0.0]
    stalls = [ev for ev in scn.events if ev.kind == "stall"]

    n_ticks = int(round(scn.duration / scn.dt))
    logs: list[TickLog] = []
    solve_times = {i: [] for i in range(1, L + 1)}
    held = [ControlInput(0.0, 0.0)] * L
    collision_time = None

    for tick in range(n_ticks):
        now = tick * scn.dt
        for i, s in enumerate(states, start=1):
            bus.publish(i, NeighborSnapshot(i, s, now), now)
        bus.deliver(now)

        controls = []
        for i, (agent, own) in enumerate(zip(agents, states), start=1):
            if tick % scn.control_divisor:
                controls.append(held[i - 1])
                continue
            lead = bus.latest(i - 1, i, now) if i > 1 else None
            t0 = clock()
            if getattr(agent, "uses_follower", True):
                follow = bus.latest(i + 1, i, now) if i < L else None
                u = agent.act(own, lead, follow, now)
            else:
                u = agent.act(own, lead, now)
            solve_times[i].append(clock() - t0)
            controls.append(u)
        held = list(controls)

        for ev in caps:
            if ev.t_start <= now + 1e-9:
                step_params[ev.agent - 1] = replace(params, v_max=min(params.v_max, ev.v_cap))
        for ev in stalls:
            if ev.active(now):
                controls[ev.agent - 1] = ControlInput(-params.a_max, 0.0)

        m1, m2 = metrics.tick_metrics(progress, d_desired)
        for i in range(L):
            s, u = states[i], controls[i]
            info = getattr(agents[i], "last", {}) or {}
            lead_d = progress[i - 1] - progress[i] if i > 0 else math.nan
            fol_d = progress[i] - progress[i + 1] if i < L - 1 else math.nan
            lead_e = math.hypot(states[i - 1].x - s.x, states[i - 1].y - s.y) if i > 0 else math.nan
            fol_e = math.hypot(states[i + 1].x - s.x, states[i + 1].y - s.y) if i < L - 1 else math.nan
            logs.append(TickLog(tick, now, i + 1, s.x, s.y, s.psi, s.v, u.a, u.delta,
                                bool(info.get("fallback", False)), lead_d, fol_d, m1[i], m2[i],
                                float(info.get("w_lead", math.nan)), float(info.get("w_follow", math.nan)),
                                lead_e, fol_e, progress[i]))

        states = [step(s, u, scn.dt, p) for s, u, p in zip(states, controls, step_params)]
        progress = [_advance_progress(path, sp, s.position) for sp, s in zip(progress, states)]
        if _collided(states, scn.collision_radius):
            collision_time = (tick + 1) * scn.dt
            break

    completion = _completion(scn, path, progress, initial_states(scn, path)[1])
    summary = metrics.summarize(logs, scn.name, scn.controller, scn.warmup,
                                collision=collision_time is not None, completion=completion)
    return RunResult(scn, logs, collision_time is not None, collision_time, summary, solve_times, progress)


def _collided(states, radius: float) -> bool:
    P = np.array([s.position for s in states])
    if len(P) < 2:
        return False
    d = np.hypot(*(P[:, None, :] - P[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    return bool(d.min() < radius)


def _completion(scn: Scenario, path, progress, start) -> float:
    """Mean fraction of the planned distance covered; planned = v_t * duration, capped by the path end."""
    fr = []
    for s, s0 in zip(progress, start):
        planned = scn.v_t * scn.duration
        if not path.closed:
            planned = min(planned, path.length - s0)
        fr.append(0.0 if planned <= 0 else (s - s0) / planned)
    return float(min(max(np.mean(fr), 0.0), 1.0))


def run_with(scn: Scenario, controller: str, seed: Optional[int] = None) -> RunResult:
    kw = dict(controller=controller)
    if seed is not None:
        kw["seed"] = seed
    return run(scn.with_(**kw))
