"""Finite-horizon discrete LQR: backward Riccati sweep over time-varying Jacobians."""

from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .linearize import DiscreteJacobians, JacobianSequence

DEFAULT_Q_DIAG = (1, 1, 1, 1, 1, 1, 10, 10, 10, 0.1, 0.1, 0.1)
DEFAULT_R_DIAG = (1, 1, 1, 1)
DIVERGENCE_LIMIT = 1e12


class RiccatiError(ArithmeticError):
    pass


def _check_symmetric(M: NDArray[np.float64], name: str, definite: bool) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(M)
    if definite and eig.min() <= 0.0:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {eig.min():.3e})")
    if not definite and eig.min() < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite (min eigenvalue {eig.min():.3e})")


@dataclass(frozen=True)
class LqrWeights:
    Q: NDArray[np.float64]
    R: NDArray[np.float64]
    S: NDArray[np.float64]

    def __post_init__(self) -> None:
        for name in ("Q", "R", "S"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        _check_symmetric(self.Q, "Q", definite=False)
        _check_symmetric(self.S, "S", definite=False)
        _check_symmetric(self.R, "R", definite=True)
        if self.Q.shape != self.S.shape:
            raise ValueError("Q and S must have the same shape")

    @classmethod
    def from_diagonals(cls, q: ArrayLike, r: ArrayLike, s: ArrayLike | None = None) -> LqrWeights:
        Q = np.diag(np.asarray(q, dtype=float))
        return cls(Q, np.diag(np.asarray(r, dtype=float)), Q if s is None else np.diag(np.asarray(s, dtype=float)))

    @classmethod
    def default(cls) -> LqrWeights:
        return cls.from_diagonals(DEFAULT_Q_DIAG, DEFAULT_R_DIAG)

    def without_integrator(self) -> LqrWeights:
        """Zero the integrator-state weights (last three states)."""
        Q, S = self.Q.copy(), self.S.copy()
        for M in (Q, S):
            M[9:, :] = 0.0
            M[:, 9:] = 0.0
        return LqrWeights(Q, self.R, S)

    def scaled(self, alpha: float) -> LqrWeights:
        return LqrWeights(alpha * self.Q, alpha * self.R, alpha * self.S)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R.tolist(), "S": self.S.tolist()}


@dataclass(frozen=True)
class GainSchedule:
    """Gains ``K_k`` (k < N) and costs-to-go ``P_k`` (k <= N)."""

    gains: NDArray[np.float64]
    costs_to_go: NDArray[np.float64]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.gains)

    def gain(self, k: int) -> NDArray[np.float64]:
        """Gain for control index ``k``; the last gain is held past the horizon."""
        return self.gains[min(max(k, 0), len(self.gains) - 1)]

    @property
    def key(self) -> str:
        blob = json.dumps(self.meta, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        np.savez(path, gains=self.gains, costs_to_go=self.costs_to_go, meta=json.dumps(self.meta, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> GainSchedule:
        with np.load(path) as data:
            return cls(data["gains"], data["costs_to_go"], json.loads(str(data["meta"])))


def riccati_sweep(
    jacobians: JacobianSequence | Sequence[DiscreteJacobians], weights: LqrWeights, meta: dict | None = None
) -> GainSchedule:
    """Backward sweep from ``P_N = S``; ``P_k`` is symmetrized after every step."""
    if isinstance(jacobians, JacobianSequence):
        As, Bs = jacobians.A, jacobians.B
    else:
        if len(jacobians) == 0:
            raise ValueError("need at least one Jacobian pair")
        As = np.array([j.A for j in jacobians])
        Bs = np.array([j.B for j in jacobians])
    N = len(As)
    if N < 1:
        raise ValueError("need at least one Jacobian pair")
    n, m = Bs.shape[1], Bs.shape[2]
    if As.shape[1:] != (n, n) or weights.Q.shape != (n, n) or weights.R.shape != (m, m):
        raise ValueError(
            f"dimension mismatch: A {As.shape[1:]}, B {Bs.shape[1:]}, Q {weights.Q.shape}, R {weights.R.shape}"
        )
    K = np.empty((N, m, n))
    P = np.empty((N + 1, n, n))
    P[N] = weights.S
    Q, R = weights.Q, weights.R
    for k in range(N - 1, -1, -1):
        A, B, Pn = As[k], Bs[k], P[k + 1]
        PB = Pn @ B
        R_bar = R + B.T @ PB
        try:
            factor = scipy.linalg.cho_factor(R_bar)
        except np.linalg.LinAlgError as exc:
            raise RiccatiError(f"R + B'PB is not positive definite at step {k}") from exc
        K[k] = scipy.linalg.cho_solve(factor, PB.T @ A)
        Pk = A.T @ (Pn @ A - PB @ K[k]) + Q
        P[k] = 0.5 * (Pk + Pk.T)
    return GainSchedule(K, P, dict(meta or {}))


def infinite_horizon_check(
    A: ArrayLike, B: ArrayLike, weights: LqrWeights, iterations: int
) -> tuple[float, GainSchedule]:
    """Sweep a constant pair for ``iterations`` steps; return ``(|P_0 - P_1|_inf, schedule)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    As = np.broadcast_to(A, (iterations,) + A.shape)
    Bs = np.broadcast_to(B, (iterations,) + B.shape)
    seq = JacobianSequence(As, Bs, 0.0, None)  # type: ignore[arg-type]
    sched = riccati_sweep(seq, weights)
    if not np.all(np.isfinite(sched.costs_to_go)) or np.max(np.abs(sched.costs_to_go)) > DIVERGENCE_LIMIT:
        raise RiccatiError("cost-to-go diverged; the pair is not stabilizable")
    residual = float(np.max(np.abs(sched.costs_to_go[0] - sched.costs_to_go[1])))
    return residual, sched
