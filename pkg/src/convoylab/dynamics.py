"""Kinematic bicycle model in [x, y, psi, v] / [a, delta] coordinates.

Continuous dynamics::

    x'   = v cos(psi)
    y'   = v sin(psi)
    psi' = v tan(delta) / wheelbase
    v'   = a

integrated with one classical RK4 step per call. Jacobians are taken of the
discrete RK4 map (not the ODE) so that the iLQR linearization matches what the
simulator actually executes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STATE_DIM = 4
CONTROL_DIM = 2
PSI = 2  # index of the heading in the state vector


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi)
    w = np.where(w <= 0.0, w + 2.0 * np.pi, w)
    return w - np.pi


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float

    def __post_init__(self):
        if not all(math.isfinite(f) for f in (self.x, self.y, self.psi, self.v)):
            raise ValueError(f"non-finite vehicle state {self!r}")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ControlInput:
    a: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta])

    @classmethod
    def from_array(cls, arr) -> "ControlInput":
        return cls(float(arr[0]), float(arr[1]))


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 0.5  # [m]
    delta_max: float = 0.5  # [rad]
    a_max: float = 3.0  # [m/s^2]
    v_max: float = 10.0  # [m/s]
    v_min: float = 0.0  # [m/s]

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError("wheelbase must be positive")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")

    def clamp(self, u: ControlInput) -> ControlInput:
        return ControlInput(
            min(max(u.a, -self.a_max), self.a_max),
            min(max(u.delta, -self.delta_max), self.delta_max),
        )

    @property
    def max_curvature(self) -> float:
        return math.tan(self.delta_max) / self.wheelbase


@dataclass(frozen=True)
class Linearization:
    A: np.ndarray  # (4, 4)
    B: np.ndarray  # (4, 2)


def _check(dt: float, delta: float, values) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not all(math.isfinite(f) for f in values):
        raise ValueError("non-finite state or control")
    if abs(delta) >= math.pi / 2:
        raise ValueError(f"steering angle {delta} at the tan singularity")


def rk4(x, y, psi, v, a, delta, dt, wheelbase, v_min, v_max):
    """One RK4 step on plain floats; returns (x, y, psi, v) with psi wrapped, v clamped."""
    kappa = math.tan(delta) / wheelbase
    h2 = 0.5 * dt
    # stage 1
    c, s = math.cos(psi), math.sin(psi)
    k1x, k1y, k1p = v * c, v * s, v * kappa
    # stage 2
    v2 = v + h2 * a
    p2 = psi + h2 * k1p
    c, s = math.cos(p2), math.sin(p2)
    k2x, k2y, k2p = v2 * c, v2 * s, v2 * kappa
    # stage 3
    p3 = psi + h2 * k2p
    c, s = math.cos(p3), math.sin(p3)
    k3x, k3y, k3p = v2 * c, v2 * s, v2 * kappa
    # stage 4
    v4 = v + dt * a
    p4 = psi + dt * k3p
    c, s = math.cos(p4), math.sin(p4)
    k4x, k4y, k4p = v4 * c, v4 * s, v4 * kappa

    h6 = dt / 6.0
    xn = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    yn = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    pn = psi + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    vn = min(max(v4, v_min), v_max)
    return xn, yn, wrap_angle(pn), vn


def step(s: VehicleState, u: ControlInput, dt: float, p: VehicleParams) -> VehicleState:
    _check(dt, u.delta, (s.x, s.y, s.psi, s.v, u.a, u.delta))
    return VehicleState(*rk4(s.x, s.y, s.psi, s.v, u.a, u.delta, dt, p.wheelbase, p.v_min, p.v_max))


def _ode_jacobians(psi, v, kappa, dkappa):
    """Batched continuous-time Jacobians F_x (n,4,4) and F_u (n,4,2)."""
    n = psi.shape[0]
    c, s = np.cos(psi), np.sin(psi)
    Fx = np.zeros((n, 4, 4))
    Fx[:, 0, 2] = -v * s
    Fx[:, 0, 3] = c
    Fx[:, 1, 2] = v * c
    Fx[:, 1, 3] = s
    Fx[:, 2, 3] = kappa
    Fu = np.zeros((n, 4, 2))
    Fu[:, 2, 1] = v * dkappa
    Fu[:, 3, 0] = 1.0
    return Fx, Fu


def rk4_jacobians(X: np.ndarray, U: np.ndarray, dt: float, p: VehicleParams):
    """Jacobians of the discrete RK4 map for a batch of (state, control) pairs.

    X has shape (n, 4) and U shape (n, 2); returns A (n, 4, 4) and B (n, 4, 2).
    """
    X = np.atleast_2d(X)
    U = np.atleast_2d(U)
    n = X.shape[0]
    psi, v = X[:, 2], X[:, 3]
    a, delta = U[:, 0], U[:, 1]
    tan_d = np.tan(delta)
    kappa = tan_d / p.wheelbase
    dkappa = (1.0 + tan_d * tan_d) / p.wheelbase
    h2 = 0.5 * dt
    eye = np.broadcast_to(np.eye(4), (n, 4, 4))

    # stage states: only psi and v enter the Jacobians
    v2 = v + h2 * a
    p2 = psi + h2 * v * kappa
    p3 = psi + h2 * v2 * kappa
    v4 = v + dt * a
    p4 = psi + dt * v2 * kappa

    J1, G1 = _ode_jacobians(psi, v, kappa, dkappa)
    J2, G2 = _ode_jacobians(p2, v2, kappa, dkappa)
    J3, G3 = _ode_jacobians(p3, v2, kappa, dkappa)
    J4, G4 = _ode_jacobians(p4, v4, kappa, dkappa)

    dk1x, dk1u = J1, G1
    dk2x = J2 @ (eye + h2 * dk1x)
    dk2u = J2 @ (h2 * dk1u) + G2
    dk3x = J3 @ (eye + h2 * dk2x)
    dk3u = J3 @ (h2 * dk2u) + G3
    dk4x = J4 @ (eye + dt * dk3x)
    dk4u = J4 @ (dt * dk3u) + G4

    h6 = dt / 6.0
    A = eye + h6 * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x)
    B = h6 * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u)

    # the speed clamp kills the speed row where it is active
    clamped = (v4 < p.v_min) | (v4 > p.v_max)
    if np.any(clamped):
        A[clamped, 3, :] = 0.0
        B[clamped, 3, :] = 0.0
    return A, B


def linearize(s: VehicleState, u: ControlInput, dt: float, p: VehicleParams) -> Linearization:
    _check(dt, u.delta, (s.x, s.y, s.psi, s.v, u.a, u.delta))
    A, B = rk4_jacobians(s.as_array()[None], u.as_array()[None], dt, p)
    return Linearization(A[0], B[0])


class BicycleModel:
    """Array interface to the bicycle model used by the iLQR solver."""

    angle_index = PSI
    n_x = STATE_DIM
    n_u = CONTROL_DIM

    def __init__(self, params: VehicleParams, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.dt = dt
        self._lo = np.array([-params.a_max, -params.delta_max])
        self._hi = np.array([params.a_max, params.delta_max])

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(u, self._lo), self._hi)

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        p = self.params
        return np.array(
            rk4(x[0], x[1], x[2], x[3], u[0], u[1], self.dt, p.wheelbase, p.v_min, p.v_max)
        )

    def jacobians(self, X: np.ndarray, U: np.ndarray):
        return rk4_jacobians(X, U, self.dt, self.params)
