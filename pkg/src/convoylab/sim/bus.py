"""Constrained neighbour message bus: rate limit, fixed latency, seeded drops."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..convoy import NeighborSnapshot
from .scenario import BusConfig


class MessageBus:
    """Directed links between convoy neighbours carrying state snapshots.

    Each link sends at most ``rate`` snapshots per second. A sent snapshot is
    lost with probability ``drop_prob`` and otherwise becomes visible to the
    receiver ``latency`` seconds later. Receivers keep only the newest
    delivered snapshot per sender and ignore it once older than ``timeout``.
    """

    def __init__(self, cfg: BusConfig, links, seed: int = 0):
        self.cfg = cfg
        self.links = sorted(set(links))  # (sender, receiver)
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        self._last_sent = {link: -np.inf for link in self.links}
        self._in_flight: list[tuple[float, int, int, NeighborSnapshot]] = []
        self._latest: dict[tuple[int, int], NeighborSnapshot] = {}
        self.delivered_log: list[tuple[float, float, int, int]] = []  # (deliver time, send time, from, to)

    def publish(self, sender: int, snap: NeighborSnapshot, now: float) -> None:
        period = 1.0 / self.cfg.rate
        for link in self.links:
            if link[0] != sender:
                continue
            # small slack so a 20 Hz link on a 0.05 s tick sends every tick
            if now - self._last_sent[link] < period - 1e-9:
                continue
            self._last_sent[link] = now
            # the draw happens for every send so drop patterns don't depend on timing
            if self._rng.random() < self.cfg.drop_prob:
                continue
            self._in_flight.append((now + self.cfg.latency, link[0], link[1], snap))

    def deliver(self, now: float) -> None:
        keep = []
        for item in self._in_flight:
            t_due, src, dst, snap = item
            if t_due <= now + 1e-9:
                cur = self._latest.get((src, dst))
                if cur is None or snap.timestamp >= cur.timestamp:
                    self._latest[(src, dst)] = snap
                self.delivered_log.append((now, snap.timestamp, src, dst))
            else:
                keep.append(item)
        self._in_flight = keep

    def latest(self, sender: int, receiver: int, now: float) -> Optional[NeighborSnapshot]:
        snap = self._latest.get((sender, receiver))
        if snap is None or now - snap.timestamp > self.cfg.timeout + 1e-9:
            return None
        return snap
