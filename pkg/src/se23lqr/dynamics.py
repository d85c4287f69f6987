"""Rigid-body quadrotor plant with linear rotor drag."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .lie import PoseSE23

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])


def _diag(*values: float) -> NDArray[np.float64]:
    return np.diag(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class QuadParams:
    """Mass, inertia and drag model. Defaults are the vehicle used in the experiments."""

    mass: float = 1.1
    inertia: NDArray[np.float64] = field(default_factory=lambda: _diag(0.0112, 0.01123, 0.02108))
    drag_D: NDArray[np.float64] = field(default_factory=lambda: _diag(0.605, 0.44, 0.275))
    drag_E: NDArray[np.float64] = field(default_factory=lambda: _diag(0.05, 0.05, 0.05))
    drag_F: NDArray[np.float64] = field(default_factory=lambda: _diag(0.1, 0.1, 0.1))
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        for name in ("inertia", "drag_D", "drag_E", "drag_F"):
            M = np.array(getattr(self, name), dtype=float).reshape(3, 3)
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        J = self.inertia
        if np.max(np.abs(J - J.T)) > 1e-12 or np.min(np.linalg.eigvalsh(J)) <= 0.0:
            raise ValueError("inertia must be symmetric positive definite")
        D = self.drag_D
        if np.any(D != np.diag(np.diag(D))) or np.any(np.diag(D) < 0.0):
            raise ValueError("drag_D must be diagonal with nonnegative entries")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(J))

    @property
    def inertia_inv(self) -> NDArray[np.float64]:
        return self._inertia_inv  # type: ignore[attr-defined]

    @property
    def gravity_vector(self) -> NDArray[np.float64]:
        return np.array([0.0, 0.0, -self.gravity])

    def scaled(self, mass: float = 1.0, D: float = 1.0, E: float = 1.0, F: float = 1.0) -> QuadParams:
        """Copy with the estimated-parameter factors applied (inertia unchanged)."""
        return replace(
            self,
            mass=self.mass * mass,
            drag_D=self.drag_D * D,
            drag_E=self.drag_E * E,
            drag_F=self.drag_F * F,
        )

    def without_drag(self) -> QuadParams:
        return self.scaled(D=0.0, E=0.0, F=0.0)

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "inertia": self.inertia.tolist(),
            "drag_D": self.drag_D.tolist(),
            "drag_E": self.drag_E.tolist(),
            "drag_F": self.drag_F.tolist(),
            "gravity": self.gravity,
        }


@dataclass(frozen=True)
class PlantState:
    pose: PoseSE23
    omega: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))

    def to_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.pose.C.ravel(), self.pose.v, self.pose.r, self.omega])

    @classmethod
    def from_vector(cls, y: ArrayLike) -> PlantState:
        y = np.asarray(y, dtype=float)
        return cls(PoseSE23(y[:9].reshape(3, 3), y[9:12], y[12:15]), y[15:18])


@dataclass(frozen=True)
class WrenchInput:
    """Collective thrust along the body 3-axis and body moment."""

    thrust: float
    moment: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "thrust", float(self.thrust))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float).reshape(3))


class StateDerivative(NamedTuple):
    C_dot: NDArray[np.float64]
    v_dot: NDArray[np.float64]
    r_dot: NDArray[np.float64]
    omega_dot: NDArray[np.float64]


@njit(cache=True)
def _derivative(y, thrust, moment, mass, g, D, E, F, J, J_inv):
    out = np.empty(18)
    C = y[:9].reshape(3, 3)
    v = y[9:12]
    w = y[15:18]
    vb = C.T @ v
    dvb = D @ vb
    for i in range(3):
        out[9 + i] = (C[i, 2] * thrust - (C[i, 0] * dvb[0] + C[i, 1] * dvb[1] + C[i, 2] * dvb[2])) / mass
        out[12 + i] = v[i]
    out[11] -= g
    Jw = J @ w
    torque = moment - np.cross(w, Jw) - E @ vb - F @ w
    out[15:18] = J_inv @ torque
    # C_dot = C w^x, column j of C w^x is C (w x e_j)
    for i in range(3):
        out[3 * i + 0] = C[i, 1] * w[2] - C[i, 2] * w[1]
        out[3 * i + 1] = C[i, 2] * w[0] - C[i, 0] * w[2]
        out[3 * i + 2] = C[i, 0] * w[1] - C[i, 1] * w[0]
    return out


@njit(cache=True)
def _project_rotation(y):
    # Newton-Schulz polar iteration; converges quadratically near SO(3).
    C = y[:9].reshape(3, 3).copy()
    for _ in range(3):
        C = C @ (1.5 * np.eye(3) - 0.5 * (C.T @ C))
    y[:9] = C.ravel()


@njit(cache=True)
def _rk4_steps(y, thrust, moment, mass, g, D, E, F, J, J_inv, dt, n):
    y = y.copy()
    for _ in range(n):
        k1 = _derivative(y, thrust, moment, mass, g, D, E, F, J, J_inv)
        k2 = _derivative(y + 0.5 * dt * k1, thrust, moment, mass, g, D, E, F, J, J_inv)
        k3 = _derivative(y + 0.5 * dt * k2, thrust, moment, mass, g, D, E, F, J, J_inv)
        k4 = _derivative(y + dt * k3, thrust, moment, mass, g, D, E, F, J, J_inv)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _project_rotation(y)
    return y


def _args(p: QuadParams) -> tuple:
    return (float(p.mass), float(p.gravity), p.drag_D, p.drag_E, p.drag_F, p.inertia, p.inertia_inv)


def rk4_vector(
    y: NDArray[np.float64],
    thrust: float,
    moment: NDArray[np.float64],
    params: QuadParams,
    dt: float,
    substeps: int = 1,
) -> NDArray[np.float64]:
    """``substeps`` RK4 steps of size ``dt`` on the flat 18-vector with the input held.

    The attitude block is re-projected onto SO(3) after every step.
    """
    return _rk4_steps(
        np.ascontiguousarray(y, dtype=float), float(thrust), np.asarray(moment, dtype=float),
        *_args(params), float(dt), int(substeps),
    )


def eval_derivative(state: PlantState, wrench: WrenchInput, params: QuadParams) -> StateDerivative:
    """Translational and rotational dynamics plus kinematics."""
    d = _derivative(state.to_vector(), wrench.thrust, wrench.moment, *_args(params))
    return StateDerivative(d[:9].reshape(3, 3), d[9:12], d[12:15], d[15:18])


def integrate_step(state: PlantState, wrench: WrenchInput, params: QuadParams, dt: float) -> PlantState:
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = rk4_vector(state.to_vector(), wrench.thrust, wrench.moment, params, dt)
    return PlantState.from_vector(y)


class ActuatorFilter:
    """Per-channel first-order lag ``y <- y + (dt/tau)(u - y)``.

    ``tau == 0`` passes the command through. The state starts at the first
    command received unless ``initial`` is given.
    """

    def __init__(self, tau: float, dt: float, initial: ArrayLike | None = None) -> None:
        if tau < 0.0:
            raise ValueError(f"tau must be nonnegative, got {tau}")
        self.tau = tau
        self.dt = dt
        self.alpha = 1.0 if tau == 0.0 else min(dt / tau, 1.0)
        self.state = None if initial is None else np.array(initial, dtype=float)

    def __call__(self, command: ArrayLike) -> NDArray[np.float64]:
        u = np.asarray(command, dtype=float)
        if self.state is None or self.tau == 0.0:
            self.state = u.copy()
        else:
            self.state = self.state + self.alpha * (u - self.state)
        return self.state.copy()


def actuator_filter(commanded: ArrayLike, tau: float, dt: float, state: ArrayLike | None) -> NDArray[np.float64]:
    """Stateless form of :class:`ActuatorFilter`; returns the next filter output."""
    return ActuatorFilter(tau, dt, state)(commanded)


@dataclass(frozen=True)
class SaturationLimits:
    thrust_max: float
    omega_max: float = 8.0
    moment_max: float = 1.0

    def __post_init__(self) -> None:
        if self.thrust_max <= 0.0 or self.omega_max <= 0.0 or self.moment_max <= 0.0:
            raise ValueError("saturation limits must be positive")

    @classmethod
    def for_params(cls, params: QuadParams, thrust_factor: float = 4.0, **kwargs: float) -> SaturationLimits:
        return cls(thrust_max=thrust_factor * params.mass * params.gravity, **kwargs)

    def clip_thrust(self, thrust: float) -> float:
        return float(min(max(thrust, 0.0), self.thrust_max))

    def clip_omega(self, omega: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(omega, dtype=float), -self.omega_max, self.omega_max)

    def clip_moment(self, moment: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(moment, dtype=float), -self.moment_max, self.moment_max)


def saturate(wrench: WrenchInput, limits: SaturationLimits) -> WrenchInput:
    return WrenchInput(limits.clip_thrust(wrench.thrust), limits.clip_moment(wrench.moment))
