"""Finite-horizon iterative LQR with fused quadratic state costs.

Each stage cost is ``(x - c_k)^T Q_k (x - c_k) + r_k + u^T R_k u`` where
``(Q_k, c_k, r_k)`` come from a :class:`~convoylab.quadform.CombinedQuadratic`.
The backward pass is the affine Riccati recursion on deviations from the
nominal trajectory, so stage centers may move along the horizon. Written with
the same scaling as the textbook LQR gain::

    K_k = (R + B^T P_{k+1} B)^{-1} B^T P_{k+1} A,   P_N = Q_F

For a constant center that is a fixed point of the dynamics, the solution
reduces to ``u_k = -K_k (x_k - c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import BicycleModel, VehicleParams, VehicleState, wrap_angles
from .quadform import CombinedQuadratic


class RiccatiError(ValueError):
    """R + B^T P B lost positive definiteness."""


@dataclass(frozen=True)
class StageCost:
    state_cost: CombinedQuadratic
    R: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("R must be a symmetric square matrix")
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class TerminalCost:
    state_cost: CombinedQuadratic


@dataclass
class Horizon:
    """Array form of a cost horizon: state cost (x - c_k)^T Q_k (x - c_k) + r_k for k = 0..N
    and control weights R_k for k = 0..N-1."""

    Q: np.ndarray  # (N+1, n, n)
    c: np.ndarray  # (N+1, n)
    r: np.ndarray  # (N+1,)
    R: np.ndarray  # (N, m, m)

    def __post_init__(self):
        N1, n = self.c.shape
        if self.Q.shape != (N1, n, n) or self.r.shape != (N1,) or self.R.shape[0] != N1 - 1:
            raise ValueError("inconsistent horizon array shapes")


@dataclass
class BackwardPass:
    K: np.ndarray  # (N, m, n) feedback gains, du = -K dx + k
    k: np.ndarray  # (N, m) feedforward
    P: np.ndarray  # (N+1, n, n) value Hessians
    s: np.ndarray  # (N+1, n) value gradients


@dataclass
class SolveResult:
    X: np.ndarray  # (N+1, n)
    U: np.ndarray  # (N, m)
    gains: np.ndarray  # (N, m, n)
    cost: float
    iterations: int
    converged: bool
    feedforward: Optional[np.ndarray] = None
    cost_history: list = field(default_factory=list)

    def first_control(self) -> np.ndarray:
        return self.U[0].copy()


class LinearModel:
    """x_{k+1} = A x_k + B u_k with optional box limits on u."""

    angle_index = None

    def __init__(self, A, B, u_lo=None, u_hi=None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.n_x, self.n_u = self.B.shape
        self.u_lo = None if u_lo is None else np.asarray(u_lo, dtype=float)
        self.u_hi = None if u_hi is None else np.asarray(u_hi, dtype=float)

    def clamp(self, u):
        if self.u_lo is not None:
            u = np.maximum(u, self.u_lo)
        if self.u_hi is not None:
            u = np.minimum(u, self.u_hi)
        return u

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def jacobians(self, X, U):
        n = np.atleast_2d(U).shape[0]
        return (np.broadcast_to(self.A, (n,) + self.A.shape).copy(),
                np.broadcast_to(self.B, (n,) + self.B.shape).copy())


class _Costs:
    """Stage and terminal costs stacked into arrays."""

    def __init__(self, stage: Sequence[StageCost], terminal: TerminalCost):
        if len(stage) < 1:
            raise ValueError("need at least one stage cost")
        all_q = [c.state_cost for c in stage] + [terminal.state_cost]
        n = all_q[0].dim
        if any(q.dim != n for q in all_q):
            raise ValueError("state cost dimensions differ across the horizon")
        self._set(np.stack([q.Q_T for q in all_q]), np.stack([q.center for q in all_q]),
                  np.array([q.remainder for q in all_q]), np.stack([s.R for s in stage]))

    def _set(self, Q, c, r, R):
        self.N = len(R)
        self.Q, self.c, self.r, self.R = Q, c, r, R

    @classmethod
    def from_horizon(cls, h: "Horizon") -> "_Costs":
        obj = cls.__new__(cls)
        obj._set(h.Q, h.c, h.r, h.R)
        return obj

    def state_error(self, X, angle_index):
        d = X - self.c
        if angle_index is not None:
            d[:, angle_index] = wrap_angles(d[:, angle_index])
        return d

    def total(self, X, U, angle_index) -> float:
        d = self.state_error(X, angle_index)
        state = np.einsum("ki,kij,kj->", d, self.Q, d) + self.r.sum()
        control = np.einsum("ki,kij,kj->", U, self.R, U)
        return float(state + control)


def _riccati(A, B, costs: _Costs, X, U, angle_index, reg: float) -> BackwardPass:
    N = costs.N
    n = A.shape[1]
    m = B.shape[2]
    d = costs.state_error(X, angle_index)
    q = np.einsum("kij,kj->ki", costs.Q, d)  # half-gradients of the state cost
    P = np.empty((N + 1, n, n))
    s = np.empty((N + 1, n))
    K = np.empty((N, m, n))
    kff = np.empty((N, m))
    P[N] = costs.Q[N]
    s[N] = q[N]
    eye_m = np.eye(m)
    AT = A.transpose(0, 2, 1)
    BT = B.transpose(0, 2, 1)
    Ru = np.einsum("kij,kj->ki", costs.R, U)
    for k in range(N - 1, -1, -1):
        Pn, sn = P[k + 1], s[k + 1]
        PA = Pn @ A[k]
        PB = Pn @ B[k]
        Huu = costs.R[k] + BT[k] @ PB
        if reg:
            Huu = Huu + reg * eye_m
        Hux = BT[k] @ PA
        hu = Ru[k] + BT[k] @ sn
        if m == 2:
            # closed-form 2x2 solve; PD iff leading minor and determinant are positive
            a, b, c = Huu.ravel()[[0, 1, 3]].tolist()
            det = a * c - b * b
            if not (a > 0.0 and det > 1e-14 * max(a * c, 1e-300)):
                raise RiccatiError(f"R + B^T P B is not positive definite at step {k}")
            inv = np.array([[c / det, -b / det], [-b / det, a / det]])
            Kk = inv @ Hux
            kk = -(inv @ hu)
        else:
            try:
                L = np.linalg.cholesky(Huu)
            except np.linalg.LinAlgError as exc:
                raise RiccatiError(f"R + B^T P B is not positive definite at step {k}") from exc
            sol = np.linalg.solve(L.T, np.linalg.solve(L, np.column_stack([Hux, hu])))
            Kk = sol[:, :n]
            kk = -sol[:, n]
        K[k] = Kk
        kff[k] = kk
        HuxT = Hux.T
        Pk = costs.Q[k] + AT[k] @ PA - HuxT @ Kk
        P[k] = 0.5 * (Pk + Pk.T)
        s[k] = q[k] + AT[k] @ sn + HuxT @ kk
    return BackwardPass(K, kff, P, s)


def backward_pass(lins, stage: Sequence[StageCost], terminal: TerminalCost,
                  X=None, U=None, angle_index=None, reg: float = 0.0) -> BackwardPass:
    """Affine Riccati recursion about a nominal (X, U); zeros when omitted.

    Raises RiccatiError when ``R + B^T P B`` is not positive definite.
    """
    if len(lins) != len(stage) or len(stage) < 1:
        raise ValueError("need one linearization per stage cost")
    A = np.stack([l.A for l in lins])
    B = np.stack([l.B for l in lins])
    costs = _Costs(stage, terminal)
    N, n, m = len(stage), A.shape[1], B.shape[2]
    X = np.zeros((N + 1, n)) if X is None else np.asarray(X, dtype=float)
    U = np.zeros((N, m)) if U is None else np.asarray(U, dtype=float)
    return _riccati(A, B, costs, X, U, angle_index, reg)


def rollout(model, x0, U) -> tuple[np.ndarray, np.ndarray]:
    """Simulate clamped controls from x0; returns (X, U_clamped)."""
    U = model.clamp(np.asarray(U, dtype=float))
    X = np.empty((U.shape[0] + 1, np.asarray(x0).shape[0]))
    X[0] = x0
    for k in range(U.shape[0]):
        X[k + 1] = model.step(X[k], U[k])
    return X, U


def cost_gradient(model, x0, U, stage: Sequence[StageCost], terminal: TerminalCost) -> np.ndarray:
    """dJ/dU by the adjoint recursion (controls assumed inside their limits)."""
    costs = _Costs(stage, terminal)
    X, U = rollout(model, x0, U)
    A, B = model.jacobians(X[:-1], U)
    d = costs.state_error(X, model.angle_index)
    lam = 2.0 * costs.Q[-1] @ d[-1]
    grad = np.empty_like(U)
    for k in range(costs.N - 1, -1, -1):
        grad[k] = 2.0 * costs.R[k] @ U[k] + B[k].T @ lam
        lam = 2.0 * costs.Q[k] @ d[k] + A[k].T @ lam
    return grad


def trajectory_cost(X, U, stage: Sequence[StageCost], terminal: TerminalCost, angle_index=None) -> float:
    return _Costs(stage, terminal).total(np.asarray(X, float), np.asarray(U, float), angle_index)


def _forward(model, x0, X, U, bp: BackwardPass, alpha: float):
    N = U.shape[0]
    Xn = np.empty_like(X)
    Un = np.empty_like(U)
    Xn[0] = x0
    ai = model.angle_index
    for k in range(N):
        dx = Xn[k] - X[k]
        if ai is not None:
            dx[ai] = (dx[ai] + np.pi) % (2.0 * np.pi) - np.pi
        u = model.clamp(U[k] + alpha * bp.k[k] - bp.K[k] @ dx)
        Un[k] = u
        Xn[k + 1] = model.step(Xn[k], u)
    return Xn, Un


def solve_model(model, x0, u_init, stage, terminal: Optional[TerminalCost] = None,
                max_iter: int = 50, tol: float = 1e-4, max_backtracks: int = 10) -> SolveResult:
    """iLQR on an arbitrary model exposing step/jacobians/clamp/angle_index.

    ``stage`` is either a sequence of StageCost (with ``terminal``) or a Horizon.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    costs = _Costs.from_horizon(stage) if isinstance(stage, Horizon) else _Costs(stage, terminal)
    x0 = np.asarray(x0, dtype=float)
    u_init = np.asarray(u_init, dtype=float)
    if u_init.shape[0] != costs.N:
        raise ValueError(f"u_init has {u_init.shape[0]} steps, horizon is {costs.N}")
    ai = model.angle_index

    X, U = rollout(model, x0, u_init)
    J = costs.total(X, U, ai)
    if not np.isfinite(J):
        raise FloatingPointError("non-finite cost on the initial rollout")
    history = [J]
    bp = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        A, B = model.jacobians(X[:-1], U)
        reg = 0.0
        while True:
            try:
                bp = _riccati(A, B, costs, X, U, ai, reg)
                break
            except RiccatiError:
                reg = 1e-6 if reg == 0.0 else 2.0 * reg
                if reg > 1e8:
                    raise

        accepted = False
        alpha = 1.0
        for _ in range(max_backtracks + 1):
            Xn, Un = _forward(model, x0, X, U, bp, alpha)
            Jn = costs.total(Xn, Un, ai)
            if not np.isfinite(Jn):
                raise FloatingPointError("non-finite cost during rollout")
            if Jn < J:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            break
        rel = (J - Jn) / max(abs(J), 1e-12)
        X, U, J = Xn, Un, Jn
        history.append(J)
        if rel < tol:
            converged = True
            break

    return SolveResult(X=X, U=U, gains=bp.K, cost=J, iterations=it, converged=converged,
                       feedforward=bp.k, cost_history=history)


def solve(x0: VehicleState, u_init, stage, terminal: Optional[TerminalCost],
          params: VehicleParams, dt: float, max_iter: int = 50, tol: float = 1e-4) -> SolveResult:
    """iLQR on the bicycle model starting from ``x0``."""
    model = BicycleModel(params, dt)
    x = x0.as_array() if isinstance(x0, VehicleState) else np.asarray(x0, dtype=float)
    return solve_model(model, x, u_init, stage, terminal, max_iter=max_iter, tol=tol)
