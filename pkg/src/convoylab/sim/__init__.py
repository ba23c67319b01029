"""Lockstep convoy simulator, scenario files and the spring-damper demo."""

from .scenario import BusConfig, Event, Scenario, ScenarioError, load
from .world import RunResult, TickLog, run

__all__ = ["BusConfig", "Event", "RunResult", "Scenario", "ScenarioError", "TickLog", "load", "run"]
