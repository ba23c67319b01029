"""Scenario files: schema, validation and procedural path/map generation.

A scenario is a YAML mapping. Top-level keys::

    name, controller (convoy | base), seed, agents, v_t, duration, dt,
    control_divisor, v_max, collision_radius, warmup,
    path:    {generator: <kind>, ...generator args} or {waypoints: [[x, y], ...], closed: bool}
    initial: {start_s, spacing, lateral, heading} or {poses: [[x, y, psi], ...]}
    events:  [{kind: stall, agent, t_start, duration} | {kind: speed_cap, agent, v_cap}]
    bus:     {rate, latency, drop_prob, timeout}
    convoy:  ConvoyConfig overrides (scalars only)
    base:    BaseConfig overrides

Agents are numbered from 1 (the convoy head). Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
import yaml

from ..dynamics import wrap_angle
from ..geometry import (OccupancyMap, Path, build_path, infinity_loop, resample_polyline, sine_path,
                        stadium_path, straight_path)


class ScenarioError(ValueError):
    """Invalid scenario content; the message names the offending field."""


@dataclass(frozen=True)
class Event:
    kind: str  # "stall" | "speed_cap"
    agent: int
    t_start: float = 0.0
    duration: float = 0.0
    v_cap: float = math.inf

    def active(self, t: float) -> bool:
        if self.kind == "speed_cap":
            return t >= self.t_start
        return self.t_start <= t < self.t_start + self.duration


@dataclass(frozen=True)
class BusConfig:
    rate: float = 20.0  # snapshots per second per link
    latency: float = 0.05  # [s]
    drop_prob: float = 0.0
    timeout: float = 1.0  # [s] snapshots older than this count as no neighbour


@dataclass(frozen=True)
class Scenario:
    name: str
    path: dict
    agents: int = 3
    v_t: float = 4.0
    duration: float = 30.0
    controller: str = "convoy"
    seed: int = 0
    initial: dict = field(default_factory=dict)
    events: tuple = ()
    bus: BusConfig = BusConfig()
    dt: float = 0.05
    control_divisor: int = 1
    v_max: Optional[float] = None  # default 1.25 v_t
    collision_radius: float = 0.8
    warmup: float = 5.0
    convoy: dict = field(default_factory=dict)
    base: dict = field(default_factory=dict)

    @property
    def vehicle_v_max(self) -> float:
        return 1.25 * self.v_t if self.v_max is None else self.v_max

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


_PATH_ARGS = {
    "straight": {"length"},
    "low_curvature": {"length", "amplitude", "wavelength"},
    "infinity_loop": {"radius"},
    "tight_turns": {"legs", "leg_length", "turn_radius", "column_radius", "half_width"},
    "tunnel": {"straight", "radius", "half_width"},
    "race_track": {"straight", "radius", "half_width"},
}
_INITIAL_KEYS = {"start_s", "spacing", "lateral", "heading", "poses"}


def _check_keys(d: dict, allowed, where: str):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    for k in d:
        if k not in allowed:
            raise ScenarioError(f"unknown field '{where}.{k}'" if where else f"unknown field '{k}'")


def _positive(name, v, strict=True):
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name}: expected a number") from None
    if not math.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ScenarioError(f"{name}: must be {'positive' if strict else 'non-negative'}")
    return v


def from_dict(raw: dict) -> Scenario:
    from ..base_controller import BaseConfig
    from ..convoy import ConvoyConfig

    top = {f.name for f in fields(Scenario)}
    _check_keys(raw, top, "")
    if "name" not in raw or "path" not in raw:
        raise ScenarioError("missing required field 'name' or 'path'")
    d = dict(raw)

    path = d["path"]
    if not isinstance(path, dict):
        raise ScenarioError("path: expected a mapping")
    if "waypoints" in path:
        _check_keys(path, {"waypoints", "closed"}, "path")
    else:
        kind = path.get("generator")
        if kind not in _PATH_ARGS:
            raise ScenarioError(f"path.generator: unknown kind {kind!r}")
        _check_keys(path, _PATH_ARGS[kind] | {"generator"}, "path")

    agents = int(d.get("agents", 3))
    if agents < 1:
        raise ScenarioError("agents: need at least one agent")
    d["agents"] = agents
    for k in ("v_t", "duration", "dt", "collision_radius"):
        if k in d:
            d[k] = _positive(k, d[k])
    if "warmup" in d:
        d["warmup"] = _positive("warmup", d["warmup"], strict=False)
    if d.get("v_max") is not None:
        d["v_max"] = _positive("v_max", d["v_max"])
    if int(d.get("control_divisor", 1)) < 1:
        raise ScenarioError("control_divisor: must be >= 1")
    if d.get("controller", "convoy") not in ("convoy", "base"):
        raise ScenarioError("controller: must be 'convoy' or 'base'")
    d["seed"] = int(d.get("seed", 0))

    initial = d.get("initial") or {}
    _check_keys(initial, _INITIAL_KEYS, "initial")
    if "poses" in initial and len(initial["poses"]) != agents:
        raise ScenarioError("initial.poses: need one pose per agent")
    d["initial"] = initial

    bus = d.get("bus") or {}
    _check_keys(bus, {f.name for f in fields(BusConfig)}, "bus")
    bus = BusConfig(**{k: float(v) for k, v in bus.items()})
    _positive("bus.rate", bus.rate)
    _positive("bus.latency", bus.latency, strict=False)
    _positive("bus.timeout", bus.timeout)
    if not 0.0 <= bus.drop_prob <= 1.0:
        raise ScenarioError("bus.drop_prob: must lie in [0, 1]")
    d["bus"] = bus

    duration = d.get("duration", 30.0)
    events = []
    for n, e in enumerate(d.get("events") or []):
        if not isinstance(e, dict) or e.get("kind") not in ("stall", "speed_cap"):
            raise ScenarioError(f"events[{n}].kind: must be 'stall' or 'speed_cap'")
        allowed = {"kind", "agent", "t_start", "duration"} if e["kind"] == "stall" else {"kind", "agent", "v_cap", "t_start"}
        _check_keys(e, allowed, f"events[{n}]")
        ev = Event(**{k: (v if k == "kind" else (int(v) if k == "agent" else float(v))) for k, v in e.items()})
        if not 1 <= ev.agent <= agents:
            raise ScenarioError(f"events[{n}].agent: no agent {ev.agent}")
        if not 0.0 <= ev.t_start <= duration:
            raise ScenarioError(f"events[{n}].t_start: must lie in [0, duration]")
        if ev.kind == "speed_cap" and not ev.v_cap > 0:
            raise ScenarioError(f"events[{n}].v_cap: must be positive")
        if ev.kind == "stall" and ev.duration < 0:
            raise ScenarioError(f"events[{n}].duration: must be non-negative")
        events.append(ev)
    d["events"] = tuple(events)

    for key, cls in (("convoy", ConvoyConfig), ("base", BaseConfig)):
        over = d.get(key) or {}
        _check_keys(over, {f.name for f in fields(cls)}, key)
        d[key] = dict(over)

    scn = Scenario(**d)
    try:
        convoy_config(scn)
        base_config(scn)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None
    world = build_world(scn)
    initial_states(scn, world[0])  # raises on colliding start poses
    return scn


def load(path) -> Scenario:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must hold a mapping")
    return from_dict(raw)


def convoy_config(scn: Scenario):
    from ..convoy import ConvoyConfig

    kw = {k: (np.diag(v) if isinstance(v, list) else v) for k, v in scn.convoy.items()}
    kw.setdefault("v_t", scn.v_t)
    return ConvoyConfig(**kw)


def base_config(scn: Scenario):
    from ..base_controller import BaseConfig

    kw = dict(scn.base)
    kw.setdefault("d_desired", convoy_config(scn).steady_gap)
    return BaseConfig(**kw)


# worlds ---------------------------------------------------------------------

def _serpentine(legs: int, leg_length: float, turn_radius: float, ds: float = 0.1) -> np.ndarray:
    """Back-and-forth path: straight legs joined by alternating half turns."""
    pts = []
    y = 0.0
    n_c = max(int(round(math.pi * turn_radius / ds)), 8)
    for leg in range(legs):
        east = leg % 2 == 0
        x = np.linspace(0.0, leg_length, max(int(leg_length / ds), 2), endpoint=False)
        pts.append(np.column_stack([x if east else leg_length - x, np.full_like(x, y)]))
        if leg < legs - 1:
            t = np.linspace(0.0, math.pi, n_c, endpoint=False)
            cy = y + turn_radius
            if east:
                pts.append(np.column_stack([leg_length + turn_radius * np.sin(t), cy - turn_radius * np.cos(t)]))
            else:
                pts.append(np.column_stack([-turn_radius * np.sin(t), cy - turn_radius * np.cos(t)]))
            y += 2 * turn_radius
    end_x = leg_length if (legs - 1) % 2 == 0 else 0.0
    pts.append([[end_x, y]])
    return np.vstack(pts)


def _map_around(path: Path, margin: float, resolution: float) -> OccupancyMap:
    lo = path.samples.min(axis=0) - margin
    hi = path.samples.max(axis=0) + margin
    return OccupancyMap.empty(lo[0], lo[1], hi[0], hi[1], resolution)


def build_world(scn: Scenario) -> tuple[Path, Optional[OccupancyMap]]:
    """Reference path and occupancy map (None for obstacle-free scenarios)."""
    spec = scn.path
    if "waypoints" in spec:
        try:
            return build_path(spec["waypoints"], closed=bool(spec.get("closed", False))), None
        except ValueError as exc:
            raise ScenarioError(f"path.waypoints: {exc}") from None
    kind = spec["generator"]
    a = {k: float(v) for k, v in spec.items() if k != "generator"}
    if kind == "straight":
        return straight_path(a.get("length", 200.0)), None
    if kind == "low_curvature":
        return sine_path(a.get("length", 200.0), a.get("amplitude", 4.0), a.get("wavelength", 60.0)), None
    if kind == "infinity_loop":
        return infinity_loop(a.get("radius", 20.0)), None
    if kind == "tight_turns":
        r = a.get("turn_radius", 6.0)
        raw = _serpentine(int(a.get("legs", 5)), a.get("leg_length", 30.0), r)
        path = Path(resample_polyline(raw, 0.1))
        m = _map_around(path, r + 4.0, 0.2)
        # a column inside every turn and a wall of half_width either side of the course
        m.fill_outside_path(path, a.get("half_width", 3.0))
        col = a.get("column_radius", 2.5)
        legs = int(a.get("legs", 5))
        L = a.get("leg_length", 30.0)
        for leg in range(legs - 1):
            cx = L if leg % 2 == 0 else 0.0
            m.fill_disk(cx, (2 * leg + 1) * r, col)
        return path, m
    if kind in ("tunnel", "race_track"):
        default_hw = 1.5 if kind == "tunnel" else 4.0
        path = stadium_path(a.get("straight", 60.0), a.get("radius", 15.0))
        hw = a.get("half_width", default_hw)
        m = _map_around(path, hw + 2.0, 0.2)
        m.fill_outside_path(path, hw)
        return path, m
    raise ScenarioError(f"path.generator: unknown kind {kind!r}")


def initial_states(scn: Scenario, path: Path):
    """Seeded start poses at rest, head first. Returns (states, start arc lengths)."""
    from ..dynamics import VehicleState

    ini = scn.initial
    L = scn.agents
    if "poses" in ini:
        states = [VehicleState(float(p[0]), float(p[1]), float(p[2]), 0.0) for p in ini["poses"]]
        s0 = []
        prev = None
        for st in states:
            s = path.project(st.position) if prev is None else path.project(st.position, s_hint=prev, window=30.0)
            if prev is not None and path.closed:
                s = prev - ((prev - s) % path.length)
            s0.append(s)
            prev = s
    else:
        spacing = float(ini.get("spacing", convoy_config(scn).steady_gap))
        start = float(ini.get("start_s", spacing * (L - 1) + 5.0))
        lateral = float(ini.get("lateral", 0.0))
        heading = float(ini.get("heading", 0.0))
        rng = np.random.default_rng(np.random.SeedSequence([scn.seed, 1]))
        s0 = [start - i * spacing for i in range(L)]
        if not path.closed and s0[-1] < 0:
            raise ScenarioError("initial.start_s: agents would start before the path")
        poses = path.pose_at_many(np.array(s0))
        off = rng.uniform(-lateral, lateral, L) if lateral > 0 else np.zeros(L)
        dh = rng.uniform(-heading, heading, L) if heading > 0 else np.zeros(L)
        states = [VehicleState(p[0] - o * math.sin(p[2]), p[1] + o * math.cos(p[2]), wrap_angle(p[2] + h), 0.0)
                  for p, o, h in zip(poses, off, dh)]
    for i in range(L):
        for j in range(i + 1, L):
            if math.hypot(states[i].x - states[j].x, states[i].y - states[j].y) < scn.collision_radius:
                raise ScenarioError(f"initial: agents {i + 1} and {j + 1} start in collision")
    return states, list(s0)
