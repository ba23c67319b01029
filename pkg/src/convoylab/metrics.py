"""Convoy spacing error metrics and run summaries.

Distances are along-path gaps. ``d[(j, i)]`` style arguments always mean
"arc length from agent i back to agent j", i.e. positive when j is ahead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

WARMUP = 5.0  # [s] excluded from averages so start-up transients don't dominate


@dataclass(frozen=True)
class MetricSample:
    time: float
    agent: int
    e_m1: float
    e_m2: float


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    controller: str
    avg_e_m1: float
    avg_e_m2: float
    collision: bool
    completion: float
    max_e_m2: float = float("nan")

    def as_dict(self) -> dict:
        return dict(scenario=self.scenario, controller=self.controller, avg_e_m1=self.avg_e_m1,
                    avg_e_m2=self.avg_e_m2, max_e_m2=self.max_e_m2, collision=self.collision,
                    completion=self.completion)


def e_m1(dists: Mapping[tuple[int, int], float], i: int, L: int) -> float:
    """Midpoint deviation of agent ``i`` (1-based) among ``L`` agents.

    ``dists[(j, k)]`` is the along-path distance from agent j (ahead) to agent k.
    Interior agents compare against the midpoint of their two neighbours, the
    last agent against the midpoint of the two agents ahead of it.
    """
    if not 1 < i <= L:
        raise ValueError(f"e_m1 is undefined for agent {i} of {L}")
    if i < L:
        return abs(dists[(i - 1, i + 1)] / 2.0 - dists[(i - 1, i)])
    if L < 3:
        raise ValueError("e_m1 for the last agent needs at least three agents")
    return abs(dists[(L - 2, L)] / 2.0 - dists[(L - 1, L)])


def e_m2(d_prev: float, d_desired: float) -> float:
    """Deviation of the gap to the lead from the desired gap."""
    return abs(d_prev - d_desired)


def tick_metrics(progress: Sequence[float], d_desired: float) -> tuple[list[float], list[float]]:
    """Per-agent (e_m1, e_m2) from along-path progress, leader first; NaN where undefined."""
    L = len(progress)
    m1 = [math.nan] * L
    m2 = [math.nan] * L
    dists = {(j, k): progress[j - 1] - progress[k - 1] for j in range(1, L + 1) for k in range(j + 1, L + 1)}
    for i in range(2, L + 1):
        m2[i - 1] = e_m2(dists[(i - 1, i)], d_desired)
        if L >= 3:
            m1[i - 1] = e_m1(dists, i, L)
    return m1, m2


def _mean(values: Iterable[float]) -> float:
    v = np.array([x for x in values if math.isfinite(x)], dtype=float)
    # sorted so the mean does not depend on record order
    return float(np.sum(np.sort(v)) / len(v)) if len(v) else math.nan


def summarize(logs, scenario: str = "", controller: str = "", warmup: float = WARMUP,
              collision: bool = False, completion: float = 1.0) -> RunSummary:
    """Time-averaged e_m1 / e_m2 over followers (agent >= 2) after ``warmup`` seconds."""
    logs = list(logs)
    if not logs:
        raise ValueError("no log records to summarize")
    keep = [r for r in logs if r.agent >= 2 and r.time >= warmup - 1e-9]
    m2 = [r.e_m2 for r in keep]
    finite = [x for x in m2 if math.isfinite(x)]
    return RunSummary(scenario, controller, _mean(r.e_m1 for r in keep), _mean(m2), bool(collision),
                      float(min(max(completion, 0.0), 1.0)), max(finite) if finite else math.nan)


def series(logs, field: str = "e_m2", start_agent: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """(times, per-tick mean of ``field`` over agents >= start_agent)."""
    by_t: dict[float, list[float]] = {}
    for r in logs:
        if r.agent >= start_agent:
            by_t.setdefault(r.time, []).append(getattr(r, field))
    t = np.array(sorted(by_t))
    vals = np.array([_mean(by_t[k]) for k in t])
    return t, vals


def smooth(values: np.ndarray, sigma_ticks: float = 4.0) -> np.ndarray:
    """Gaussian-smoothed copy of a series, for plotting only (NaNs are left in place)."""
    from scipy.ndimage import gaussian_filter1d

    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    out = v.copy()
    if ok.any():
        out[ok] = gaussian_filter1d(v[ok], sigma_ticks, mode="nearest")
    return out
