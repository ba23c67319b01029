"""Fusing several quadratic penalties on one variable into a single quadratic.

A sum of terms ``(x - x_i)^T Q_i (x - x_i)`` expands to::

    x^T Q_T x - 2 y_T^T x + Z_T,   Q_T = sum Q_i,  y_T = sum Q_i x_i,
                                   Z_T = sum x_i^T Q_i x_i

and completing the square gives ``(x - c)^T Q_T (x - c) + Z_T - y_T^T c``
with center ``c = Q_T^{-1} y_T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

SYM_TOL = 1e-12


class QuadFormError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticTerm:
    Q: np.ndarray
    x_ref: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        x = np.asarray(self.x_ref, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or x.shape != (Q.shape[0],):
            raise QuadFormError(f"shape mismatch: Q {Q.shape}, x_ref {x.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(Q))):
            raise QuadFormError("Q is not symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "x_ref", x)

    def evaluate(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.x_ref
        return float(d @ self.Q @ d)


@dataclass(frozen=True)
class CombinedQuadratic:
    Q_T: np.ndarray
    y_T: np.ndarray
    Z_T: float

    @property
    def dim(self) -> int:
        return self.y_T.shape[0]

    @cached_property
    def _factor(self):
        try:
            return cho_factor(self.Q_T, lower=True, check_finite=True)
        except LinAlgError as exc:
            raise QuadFormError(f"Q_T = sum of term weights is not positive definite:\n{self.Q_T}") from exc

    @cached_property
    def center(self) -> np.ndarray:
        return cho_solve(self._factor, self.y_T)

    @cached_property
    def remainder(self) -> float:
        """Minimum value, Z_T - y_T^T Q_T^{-1} y_T."""
        return float(self.Z_T - self.y_T @ self.center)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != self.y_T.shape:
            raise QuadFormError(f"expected a {self.dim}-vector, got shape {x.shape}")
        return float(x @ self.Q_T @ x - 2.0 * self.y_T @ x + self.Z_T)

    def __add__(self, other: "CombinedQuadratic") -> "CombinedQuadratic":
        return CombinedQuadratic(self.Q_T + other.Q_T, self.y_T + other.y_T, self.Z_T + other.Z_T)


def combine(terms: Sequence[QuadraticTerm] | Iterable[QuadraticTerm], check: bool = True) -> CombinedQuadratic:
    terms = list(terms)
    if not terms:
        raise QuadFormError("need at least one term")
    n = terms[0].x_ref.shape[0]
    Q_T = np.zeros((n, n))
    y_T = np.zeros(n)
    Z_T = 0.0
    for t in terms:
        if t.x_ref.shape[0] != n:
            raise QuadFormError(f"dimension mismatch: {t.x_ref.shape[0]} vs {n}")
        if check and np.linalg.eigvalsh(t.Q)[0] < -SYM_TOL:
            raise QuadFormError("term weight is not positive semidefinite")
        qx = t.Q @ t.x_ref
        Q_T += t.Q
        y_T += qx
        Z_T += float(t.x_ref @ qx)
    out = CombinedQuadratic(Q_T, y_T, Z_T)
    if check:
        out._factor  # raises if the sum is singular
    return out


def center(c: CombinedQuadratic) -> np.ndarray:
    return c.center


def evaluate(c: CombinedQuadratic, x) -> float:
    return c.evaluate(x)
