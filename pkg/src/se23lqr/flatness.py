"""Reference generation from flat outputs (position and yaw).

The reference force, attitude and thrust come from a fixed-point
iteration on the drag-compensated force; the reference angular velocity
is recovered from successive attitudes through the discrete Poisson
equation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dynamics import E3, QuadParams
from .lie import SMALL_ANGLE, PoseSE23, so3_log

FORCE_FLOOR = 1e-6
TRIAD_FLOOR = 1e-6
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 50


class ReferenceGenerationError(ValueError):
    pass


@dataclass(frozen=True)
class FlatSample:
    position: NDArray[np.float64]
    velocity: NDArray[np.float64]
    acceleration: NDArray[np.float64]
    yaw: float = 0.0
    yaw_rate: float = 0.0
    yaw_accel: float = 0.0


class FlatTrajectory(Protocol):
    def __call__(self, t: float) -> FlatSample: ...


@dataclass(frozen=True)
class Helix:
    """``r(t) = [R sin(wt), R cos(wt), climb*t]`` with constant yaw."""

    radius: float = 3.0
    rate: float = 1.0
    climb: float = 0.5
    yaw: float = 0.0

    def __call__(self, t: float) -> FlatSample:
        R, w = self.radius, self.rate
        s, c = np.sin(w * t), np.cos(w * t)
        return FlatSample(
            position=np.array([R * s, R * c, self.climb * t]),
            velocity=np.array([R * w * c, -R * w * s, self.climb]),
            acceleration=np.array([-R * w * w * s, -R * w * w * c, 0.0]),
            yaw=self.yaw,
        )


@dataclass(frozen=True)
class Hover:
    """Constant position and yaw."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0

    def __call__(self, t: float) -> FlatSample:
        return FlatSample(np.array(self.position, dtype=float), np.zeros(3), np.zeros(3), yaw=self.yaw)


def helix_eval(t: float) -> FlatSample:
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return Helix()(t)


@dataclass(frozen=True)
class ReferenceSample:
    C_ar: NDArray[np.float64]
    v_r: NDArray[np.float64]
    r_r: NDArray[np.float64]
    omega_r: NDArray[np.float64]
    thrust_r: float
    accel_r: NDArray[np.float64] | None = None

    @property
    def pose(self) -> PoseSE23:
        return PoseSE23(self.C_ar, self.v_r, self.r_r)


def _triads(force: NDArray[np.float64], yaw: NDArray[np.float64]) -> NDArray[np.float64]:
    """Attitudes ``[r1 r2 r3]`` for a batch of forces, shape (n, 3) -> (n, 3, 3)."""
    norm = np.linalg.norm(force, axis=1)
    bad = np.flatnonzero(norm < FORCE_FLOOR)
    if bad.size:
        raise ReferenceGenerationError(
            f"sample {bad[0]}: reference force {norm[bad[0]]:.3e} N is below the degeneracy floor"
        )
    r3 = force / norm[:, None]
    c1 = np.column_stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)])
    r2 = np.cross(r3, c1)
    n2 = np.linalg.norm(r2, axis=1)
    bad = np.flatnonzero(n2 < TRIAD_FLOOR)
    if bad.size:
        raise ReferenceGenerationError(f"sample {bad[0]}: heading vector is parallel to the thrust axis")
    r2 /= n2[:, None]
    r1 = np.cross(r2, r3)
    return np.stack([r1, r2, r3], axis=2)


def attitude_thrust_batch(
    acceleration: NDArray[np.float64],
    velocity: NDArray[np.float64],
    yaw: NDArray[np.float64],
    est: QuadParams,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.int64]]:
    """Vectorized :func:`reference_attitude_thrust`; each sample iterates independently."""
    acceleration = np.atleast_2d(np.asarray(acceleration, dtype=float))
    velocity = np.atleast_2d(np.asarray(velocity, dtype=float))
    yaw = np.atleast_1d(np.asarray(yaw, dtype=float))
    n = len(acceleration)
    base = est.mass * (acceleration + est.gravity * E3)
    D = est.drag_D
    # First pass has no drag term (attitude estimate starts at zero).
    f = base.copy()
    C = _triads(f, yaw)
    iterations = np.ones(n, dtype=np.int64)
    active = np.arange(n)
    for it in range(2, max_iter + 1):
        Ca = C[active]
        vb = np.einsum("nji,nj->ni", Ca, velocity[active])
        f_new = base[active] + np.einsum("nij,nj->ni", Ca, vb * np.diag(D))
        C_new = _triads(f_new, yaw[active])
        done = np.max(np.abs(f_new - f[active]), axis=1) < tol
        f[active] = f_new
        C[active] = C_new
        iterations[active] = it
        active = active[~done]
        if active.size == 0:
            thrust = np.einsum("ni,ni->n", C[:, :, 2], f)
            return C, thrust, iterations
    raise ReferenceGenerationError(
        f"sample {active[0]}: reference force did not converge in {max_iter} iterations"
    )


def reference_attitude_thrust(
    flat: FlatSample,
    est: QuadParams,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> tuple[NDArray[np.float64], float, int]:
    """Return ``(C_ar, thrust_r, iterations)`` for one flat-output sample.

    The drag term uses the attitude from the previous pass; the first pass
    runs without it. Iteration stops once the force changes by less than
    ``tol`` (infinity norm).
    """
    C, thrust, it = attitude_thrust_batch(flat.acceleration, flat.velocity, flat.yaw, est, tol, max_iter)
    return C[0], float(thrust[0]), int(it[0])


def reference_angular_velocity(C_prev: ArrayLike, C_curr: ArrayLike, T: float) -> NDArray[np.float64]:
    """Solve ``C_curr = C_prev exp(T w^x)`` for ``w``."""
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    phi = so3_log(np.asarray(C_prev).T @ np.asarray(C_curr))
    if np.pi - np.linalg.norm(phi) < 1e-9:
        raise ReferenceGenerationError("relative rotation between samples is pi; angular velocity is ambiguous")
    return phi / T


def _poisson_batch(C_prev: NDArray[np.float64], C_curr: NDArray[np.float64], T: float) -> NDArray[np.float64]:
    """Vectorized :func:`reference_angular_velocity` away from the pi boundary."""
    R = np.einsum("nji,njk->nik", C_prev, C_curr)
    w = 0.5 * np.stack([R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]], axis=1)
    s = np.linalg.norm(w, axis=1)
    angle = np.arctan2(s, 0.5 * (np.trace(R, axis1=1, axis2=2) - 1.0))
    t2 = angle * angle
    small = angle < SMALL_ANGLE
    ratio = np.where(small, 1.0 + t2 / 6.0, angle / np.where(small, 1.0, s))
    return w * (ratio / T)[:, None]


@dataclass(frozen=True)
class ReferenceTrack:
    """Reference samples at ``t_k = k T`` for ``k = 0..N``."""

    T: float
    t: NDArray[np.float64]
    C_ar: NDArray[np.float64]
    v_r: NDArray[np.float64]
    r_r: NDArray[np.float64]
    accel_r: NDArray[np.float64]
    omega_r: NDArray[np.float64]
    thrust_r: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def horizon(self) -> int:
        return len(self.t) - 1

    def sample(self, k: int) -> ReferenceSample:
        return ReferenceSample(
            self.C_ar[k], self.v_r[k], self.r_r[k], self.omega_r[k], float(self.thrust_r[k]), self.accel_r[k]
        )

    def to_csv(self, path: str | Path) -> None:
        header = ["t", "r_x", "r_y", "r_z", "v_x", "v_y", "v_z"]
        header += [f"C_{i}{j}" for i in range(1, 4) for j in range(1, 4)]
        header += ["omega_x", "omega_y", "omega_z", "thrust"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self)):
                row = [self.t[k], *self.r_r[k], *self.v_r[k], *self.C_ar[k].ravel(), *self.omega_r[k], self.thrust_r[k]]
                w.writerow([repr(float(x)) for x in row])


def build_reference_track(traj: FlatTrajectory, T: float, horizon: int, est: QuadParams) -> ReferenceTrack:
    if horizon < 2:
        raise ValueError(f"horizon must be at least 2 steps, got {horizon}")
    n = horizon + 1
    t = np.arange(n) * T
    flats = [traj(float(tk)) for tk in t]
    r = np.array([f.position for f in flats])
    v = np.array([f.velocity for f in flats])
    a = np.array([f.acceleration for f in flats])
    yaw = np.array([f.yaw for f in flats])
    try:
        C, thrust, _ = attitude_thrust_batch(a, v, yaw, est)
    except ReferenceGenerationError as exc:
        raise ReferenceGenerationError(f"reference track: {exc}") from exc
    omega = np.empty((n, 3))
    omega[1:] = _poisson_batch(C[:-1], C[1:], T)
    bad = np.flatnonzero(np.pi - np.linalg.norm(omega[1:], axis=1) * T < 1e-3)
    for k in bad + 1:
        # Slow path only near pi; it raises with the exact diagnosis.
        try:
            omega[k] = reference_angular_velocity(C[k - 1], C[k], T)
        except ReferenceGenerationError as exc:
            raise ReferenceGenerationError(f"reference sample {k} (t={t[k]:.4f} s): {exc}") from exc
    omega[0] = omega[1]
    return ReferenceTrack(T, t, C, v, r, a, omega, thrust)
