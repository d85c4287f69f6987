"""Gain-scheduled tracking controller: error extraction, feedback plus
feedforward, the position integrator and the inner angular-rate PI loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dynamics import QuadParams, SaturationLimits
from .flatness import ReferenceSample
from .lie import PoseSE23, se23_inverse, se23_log, so3_log
from .linearize import DEFAULT_C1, Variant
from .lqr import GainSchedule

INTEGRATOR_LIMIT = 5.0
RATE_INTEGRAL_LIMIT = 2.0
DEFAULT_K_OMEGA = np.diag([5.0, 5.0, 5.0])
DEFAULT_K_I = np.diag([3.0, 3.0, 3.0])


class TrackingError(NamedTuple):
    """``xi`` is the 9-dimensional error fed to the gains; ``dv``/``dr`` feed the integrator."""

    xi: NDArray[np.float64]
    dC: NDArray[np.float64]
    dv: NDArray[np.float64]
    dr: NDArray[np.float64]


class ControlCommand(NamedTuple):
    thrust: float
    omega_cmd: NDArray[np.float64]
    delta_u: NDArray[np.float64]


@dataclass
class ControllerState:
    xi_i: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    omega_err_integral: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    k: int = 0


def tracking_error_se23(X: PoseSE23, Xr: PoseSE23, strict: bool = False) -> TrackingError:
    """Left-invariant error ``dX = X^-1 Xr`` and its exact logarithm.

    An initial error of exactly pi in rotation is resolved by the branch
    convention of :func:`so3_log` unless ``strict`` is set.
    """
    dX = se23_inverse(X) @ Xr
    return TrackingError(se23_log(dX, strict=strict), dX.C, dX.v, dX.r)


def tracking_error_conventional(X: PoseSE23, Xr: PoseSE23) -> TrackingError:
    """Multiplicative attitude error, inertial-frame velocity and position differences."""
    dC = X.C.T @ Xr.C
    dv = Xr.v - X.v
    dr = Xr.r - X.r
    return TrackingError(np.concatenate([so3_log(dC), dv, dr]), dC, dv, dr)


def control_step(error: ArrayLike, K: ArrayLike, ref: ReferenceSample, dC: ArrayLike) -> ControlCommand:
    """``du = -K e``; thrust ``f_r - du_0``; rate command ``dC w_r - du_1:4``."""
    du = -np.asarray(K) @ np.asarray(error, dtype=float)
    thrust = ref.thrust_r - du[0]
    omega_cmd = np.asarray(dC) @ ref.omega_r - du[1:]
    return ControlCommand(float(thrust), omega_cmd, du)


def integrator_update(
    xi_i: ArrayLike, dv: ArrayLike, dr: ArrayLike, c1: float, T: float, limit: float = INTEGRATOR_LIMIT
) -> NDArray[np.float64]:
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    out = np.asarray(xi_i, dtype=float) + T * (c1 * np.asarray(dr) + np.asarray(dv))
    return np.clip(out, -limit, limit)


def torque_pi(
    omega_meas: ArrayLike,
    omega_cmd: ArrayLike,
    integral: ArrayLike,
    est: QuadParams,
    C_ab: ArrayLike,
    v_a: ArrayLike,
    K_omega: ArrayLike = DEFAULT_K_OMEGA,
    K_i: ArrayLike = DEFAULT_K_I,
    T: float = 0.0025,
    limit: float = RATE_INTEGRAL_LIMIT,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Drag feedforward plus PI on ``e = omega_meas - omega_cmd``.

    Returns ``(moment, updated_integral)``; the moment uses the integral
    accumulated before this tick.
    """
    w = np.asarray(omega_meas, dtype=float)
    e = w - np.asarray(omega_cmd, dtype=float)
    integral = np.asarray(integral, dtype=float)
    moment = (
        est.drag_E @ (np.asarray(C_ab).T @ np.asarray(v_a))
        + est.drag_F @ w
        - np.asarray(K_omega) @ e
        - np.asarray(K_i) @ integral
    )
    return moment, np.clip(integral + T * e, -limit, limit)


@dataclass
class TrackingController:
    """Stateful wrapper run once per control tick."""

    schedule: GainSchedule
    variant: Variant
    est: QuadParams
    limits: SaturationLimits
    T: float
    c1: float = DEFAULT_C1
    K_omega: NDArray[np.float64] = field(default_factory=lambda: DEFAULT_K_OMEGA.copy())
    K_i: NDArray[np.float64] = field(default_factory=lambda: DEFAULT_K_I.copy())
    use_integrator: bool = True
    integrator_limit: float = INTEGRATOR_LIMIT
    rate_integral_limit: float = RATE_INTEGRAL_LIMIT
    state: ControllerState = field(default_factory=ControllerState)

    def error(self, X: PoseSE23, ref: ReferenceSample) -> TrackingError:
        if self.variant.error == "se23":
            return tracking_error_se23(X, ref.pose)
        return tracking_error_conventional(X, ref.pose)

    def step(self, X: PoseSE23, omega: NDArray[np.float64], ref: ReferenceSample) -> tuple[TrackingError, ControlCommand, NDArray[np.float64]]:
        """Return ``(error, saturated command, saturated moment)`` and advance the state."""
        s = self.state
        err = self.error(X, ref)
        e = np.concatenate([err.xi, s.xi_i])
        cmd = control_step(e, self.schedule.gain(s.k), ref, err.dC)
        thrust = self.limits.clip_thrust(cmd.thrust)
        omega_cmd = self.limits.clip_omega(cmd.omega_cmd)
        moment, s.omega_err_integral = torque_pi(
            omega, omega_cmd, s.omega_err_integral, self.est, X.C, X.v,
            self.K_omega, self.K_i, self.T, self.rate_integral_limit,
        )
        if self.use_integrator:
            s.xi_i = integrator_update(s.xi_i, err.dv, err.dr, self.c1, self.T, self.integrator_limit)
        s.k += 1
        return err, ControlCommand(thrust, omega_cmd, cmd.delta_u), self.limits.clip_moment(moment)
