"""Three-mass spring-damper chain: lead-only versus two-sided coupling.

Mass 1 is pulled along by a reference moving at ``v0``; masses 2 and 3 keep a
gap ``d`` through spring-damper links. With ``lead_only`` coupling a mass feels
only its predecessor, with ``both_neighbors`` it also feels its successor.
The disturbance pins one mass (the last by default) to the ground for
``t_hold`` seconds and then lets go. Settling is judged on gap errors after the release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

COUPLINGS = ("lead_only", "both_neighbors")


@dataclass(frozen=True)
class Disturbance:
    t_hold: float = 2.0  # [s] pinned duration
    v0: float = 1.0  # [m/s] reference speed
    gap: float = 2.0  # [m]
    t_end: float = 80.0  # [s] simulated time after release
    band: float = 0.05  # settling band as a fraction of v0 * t_hold
    stuck: int = 3  # which mass (1-based) is pinned


def _system(coupling: str, k: float, c: float, m: float, pinned: Optional[int], v0: float, gap: float):
    """Affine dynamics z' = M z on z = [p1, p2, p3, v1, v2, v3, t, 1]."""
    M = np.zeros((8, 8))
    M[0:3, 3:6] = np.eye(3)
    M[6, 7] = 1.0  # clock
    K = np.zeros((3, 3))
    C = np.zeros((3, 3))
    f = np.zeros(3)  # constant forces (gap preload)
    # reference spring on mass 1: k (v0 t - p1) + c (v0 - v1)
    K[0, 0] -= k
    C[0, 0] -= c
    ref_pos = np.array([k, 0.0, 0.0])  # multiplies v0 t
    f[0] += c * v0

    def link(front, back):
        # force on the back mass pulling toward front - gap
        K[back, front] += k
        K[back, back] -= k
        C[back, front] += c
        C[back, back] -= c
        f[back] -= k * gap
        if coupling == "both_neighbors":
            K[front, back] += k
            K[front, front] -= k
            C[front, back] += c
            C[front, front] -= c
            f[front] += k * gap

    link(0, 1)
    link(1, 2)
    M[3:6, 0:3] = K / m
    M[3:6, 3:6] = C / m
    M[3:6, 6] = ref_pos * v0 / m
    M[3:6, 7] = f / m
    if pinned is not None:
        M[pinned, :] = 0.0
        M[pinned + 3, :] = 0.0
    return M


def simulate(coupling: str, k: float, c: float, m: float = 1.0, dist: Disturbance = Disturbance(),
             dt: float = 0.01):
    """Times from release and gap errors (T, 3): mass 1 vs reference, then the two gaps."""
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}")
    if min(k, c, m) <= 0:
        raise ValueError("k, c and m must be positive")
    if dist.stuck not in (1, 2, 3):
        raise ValueError("stuck must name mass 1, 2 or 3")
    v0, g = dist.v0, dist.gap
    # steady motion: everyone at v0, gaps exact, mass 1 on its reference
    z = np.array([0.0, -g, -2 * g, v0, v0, v0, 0.0, 1.0])
    n_hold = int(round(dist.t_hold / dt))
    j = dist.stuck - 1
    P_hold = expm(_system(coupling, k, c, m, j, v0, g) * dt)
    P_free = expm(_system(coupling, k, c, m, None, v0, g) * dt)
    if n_hold:
        z[j + 3] = 0.0
    for _ in range(n_hold):
        z = P_hold @ z
    n = int(round(dist.t_end / dt)) + 1
    out = np.empty((n, 8))
    for i in range(n):
        out[i] = z
        z = P_free @ z
    t = out[:, 6]
    err = np.column_stack([out[:, 0] - v0 * t, out[:, 0] - out[:, 1] - g, out[:, 1] - out[:, 2] - g])
    return np.arange(n) * dt, err


def settling_time(t: np.ndarray, e: np.ndarray, band: float) -> float:
    """First time after which |e| stays within ``band`` (0 if it never leaves)."""
    out = np.nonzero(np.abs(e) > band)[0]
    if out.size == 0:
        return 0.0
    last = out[-1]
    if last + 1 >= len(t):
        return math.inf
    return float(t[last + 1])


def spring_demo(coupling: str, k: float, c: float, m: float = 1.0, disturbance: Disturbance = Disturbance(),
                dt: float = 0.01) -> list[float]:
    """5% settling time per agent after the stuck mass is released."""
    t, err = simulate(coupling, k, c, m, disturbance, dt)
    band = max(disturbance.band * disturbance.v0 * disturbance.t_hold, 1e-9)
    return [settling_time(t, err[:, j], band) for j in range(3)]


def single_mass_step(k: float, c: float, m: float, x0: float, t_end: float, dt: float = 0.001):
    """Free response of one damped oscillator released from x0 at rest; (t, x)."""
    A = np.array([[0.0, 1.0], [-k / m, -c / m]])
    P = expm(A * dt)
    n = int(round(t_end / dt)) + 1
    z = np.array([x0, 0.0])
    xs = np.empty(n)
    for i in range(n):
        xs[i] = z[0]
        z = P @ z
    return np.arange(n) * dt, xs


def envelope_settling_time(k: float, c: float, m: float, band: float = 0.05) -> float:
    """Time for the underdamped decay envelope x0 e^(-zeta w t)/sqrt(1 - zeta^2) to reach band * x0."""
    w = math.sqrt(k / m)
    zeta = c / (2.0 * math.sqrt(k * m))
    if zeta >= 1.0:
        raise ValueError("envelope formula needs an underdamped system")
    return math.log(1.0 / (band * math.sqrt(1.0 - zeta * zeta))) / (zeta * w)
