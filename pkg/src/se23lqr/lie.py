"""SO(3) and SE_2(3) matrix Lie group operations.

Poses are stored as ``(C, v, r)`` triples rather than 5x5 matrices; the
matrix form is available through :meth:`PoseSE23.matrix`. Tangent vectors
are plain length-9 arrays ordered ``(xi_phi, xi_v, xi_r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

# Below this angle the trigonometric coefficients switch to Taylor series.
SMALL_ANGLE = 1e-6
# Below this sin(angle) (with cos < 0) the axis comes from the symmetric part.
NEAR_PI_SIN = 1e-3
# t - sin t cancels badly for small t; its series is used below this angle.
THIRD_COEFF_SERIES = 0.1
ORTHONORMAL_TOL = 1e-6
BRANCH_TOL = 1e-9


class LieError(ValueError):
    """Raised for invalid group or algebra elements."""


class BranchAmbiguityError(LieError):
    """Raised when a logarithm is requested at rotation angle pi."""


def skew(a: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix ``a^x`` such that ``a^x b = a x b``."""
    x, y, z = np.asarray(a, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(M: ArrayLike) -> NDArray[np.float64]:
    M = np.asarray(M, dtype=float)
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def _coefficients(angle: float) -> tuple[float, float, float]:
    """Return ``sin(t)/t``, ``(1 - cos t)/t^2`` and ``(t - sin t)/t^3``."""
    t2 = angle * angle
    if angle < SMALL_ANGLE:
        return (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    s = np.sin(angle)
    # Half-angle form avoids cancellation in 1 - cos t.
    b = 2.0 * (np.sin(0.5 * angle) / angle) ** 2
    if angle < THIRD_COEFF_SERIES:
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2**3 / 362880.0 + t2**4 / 39916800.0
    else:
        c = (angle - s) / (angle * t2)
    return s / angle, b, c


def so3_exp(phi: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues formula for the exponential of ``phi^x``."""
    phi = np.asarray(phi, dtype=float)
    a, b, _ = _coefficients(float(np.linalg.norm(phi)))
    P = skew(phi)
    return np.eye(3) + a * P + b * (P @ P)


def _det3(C: NDArray[np.float64]) -> float:
    return float(
        C[0, 0] * (C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1])
        - C[0, 1] * (C[1, 0] * C[2, 2] - C[1, 2] * C[2, 0])
        + C[0, 2] * (C[1, 0] * C[2, 1] - C[1, 1] * C[2, 0])
    )


def check_rotation(C: ArrayLike, tol: float = ORTHONORMAL_TOL) -> NDArray[np.float64]:
    C = np.asarray(C, dtype=float)
    if C.shape != (3, 3):
        raise LieError(f"expected a 3x3 matrix, got shape {C.shape}")
    G = C.T @ C
    G.flat[::4] -= 1.0
    err = float(np.abs(G).max())
    # NaN fails both comparisons, so non-finite input is rejected here too.
    if not (err <= tol and abs(_det3(C) - 1.0) <= tol):
        raise LieError(f"matrix is not a rotation (orthonormality error {err:.3e})")
    return C


def _rotation_angle(C: NDArray[np.float64]) -> tuple[float, NDArray[np.float64], float]:
    w = 0.5 * np.array([C[2, 1] - C[1, 2], C[0, 2] - C[2, 0], C[1, 0] - C[0, 1]])  # sin(angle) * axis
    s = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    c = 0.5 * (C[0, 0] + C[1, 1] + C[2, 2] - 1.0)
    return math.atan2(s, c), w, s


def so3_log(C: ArrayLike) -> NDArray[np.float64]:
    """Principal-branch rotation vector of ``C`` (norm at most pi).

    At exactly pi the axis is taken from the largest diagonal entry of
    ``(C + I) / 2`` and its sign fixed so the first nonzero component is
    nonnegative.
    """
    C = check_rotation(C)
    angle, w, s = _rotation_angle(C)
    if angle < SMALL_ANGLE:
        a, _, _ = _coefficients(angle)
        return w / a
    if s > NEAR_PI_SIN or np.cos(angle) > 0.0:
        return w * (angle / s)
    # Near pi: aa^T = (sym(C) - cos I) / (1 - cos).
    c = np.cos(angle)
    S = (0.5 * (C + C.T) - c * np.eye(3)) / (1.0 - c)
    i = int(np.argmax(np.diag(S)))
    axis = S[:, i] / np.sqrt(S[i, i])
    axis /= np.linalg.norm(axis)
    if s > 1e-15 and float(axis @ w) < 0.0:
        axis = -axis
    elif s <= 1e-15:
        nz = np.flatnonzero(np.abs(axis) > 1e-12)
        if nz.size and axis[nz[0]] < 0.0:
            axis = -axis
    return angle * axis


def so3_left_jacobian(phi: ArrayLike) -> NDArray[np.float64]:
    """Left Jacobian of SO(3); also couples velocity/position in SE_2(3)."""
    phi = np.asarray(phi, dtype=float)
    a, b, c = _coefficients(float(np.linalg.norm(phi)))
    # (1 - sin t/t) a a^T == (t - sin t)/t^3 * phi phi^T
    return a * np.eye(3) + c * np.outer(phi, phi) + b * skew(phi)


@dataclass(frozen=True)
class PoseSE23:
    """Element of SE_2(3): attitude DCM, velocity and position."""

    C: NDArray[np.float64]
    v: NDArray[np.float64]
    r: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float).reshape(3, 3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> PoseSE23:
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, X: ArrayLike) -> PoseSE23:
        X = np.asarray(X, dtype=float)
        if X.shape != (5, 5):
            raise LieError(f"expected a 5x5 matrix, got shape {X.shape}")
        if np.max(np.abs(X[3:, :] - np.hstack([np.zeros((2, 3)), np.eye(2)]))) > 1e-12:
            raise LieError("bottom rows are not [0 I]")
        return cls(X[:3, :3], X[:3, 3], X[:3, 4])

    def matrix(self) -> NDArray[np.float64]:
        X = np.eye(5)
        X[:3, :3] = self.C
        X[:3, 3] = self.v
        X[:3, 4] = self.r
        return X

    def __matmul__(self, other: PoseSE23) -> PoseSE23:
        return se23_compose(self, other)


def se23_wedge(xi: ArrayLike) -> NDArray[np.float64]:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (9,):
        raise LieError(f"expected a 9-vector, got shape {xi.shape}")
    M = np.zeros((5, 5))
    M[:3, :3] = skew(xi[:3])
    M[:3, 3] = xi[3:6]
    M[:3, 4] = xi[6:9]
    return M


def se23_vee(M: ArrayLike) -> NDArray[np.float64]:
    M = np.asarray(M, dtype=float)
    if M.shape != (5, 5):
        raise LieError(f"expected a 5x5 matrix, got shape {M.shape}")
    P = M[:3, :3]
    if np.max(np.abs(M[3:, :])) > 1e-12 or np.max(np.abs(P + P.T)) > 1e-12:
        raise LieError("matrix does not have the se_2(3) structure")
    return np.concatenate([unskew(P), M[:3, 3], M[:3, 4]])


def se23_exp(xi: ArrayLike) -> PoseSE23:
    xi = np.asarray(xi, dtype=float)
    J = so3_left_jacobian(xi[:3])
    return PoseSE23(so3_exp(xi[:3]), J @ xi[3:6], J @ xi[6:9])


def se23_log(X: PoseSE23, strict: bool = True) -> NDArray[np.float64]:
    """Tangent vector of ``X``.

    With ``strict`` a rotation angle within ``BRANCH_TOL`` of pi raises
    :class:`BranchAmbiguityError`; otherwise the :func:`so3_log` axis
    convention resolves the branch.
    """
    phi = so3_log(X.C)
    if strict and np.pi - np.linalg.norm(phi) < BRANCH_TOL:
        raise BranchAmbiguityError("rotation angle is pi; logarithm branch is ambiguous")
    J = so3_left_jacobian(phi)
    rhs = np.column_stack([X.v, X.r])
    nu_rho = np.linalg.solve(J, rhs)
    return np.concatenate([phi, nu_rho[:, 0], nu_rho[:, 1]])


def se23_compose(X: PoseSE23, Y: PoseSE23) -> PoseSE23:
    return PoseSE23(X.C @ Y.C, X.C @ Y.v + X.v, X.C @ Y.r + X.r)


def se23_inverse(X: PoseSE23) -> PoseSE23:
    Ct = X.C.T
    return PoseSE23(Ct, -Ct @ X.v, -Ct @ X.r)


def se23_adjoint_algebra(xi: ArrayLike) -> NDArray[np.float64]:
    """Matrix of ``eta -> vee(xi^ eta^ - eta^ xi^)``."""
    xi = np.asarray(xi, dtype=float)
    P, V, R = skew(xi[:3]), skew(xi[3:6]), skew(xi[6:9])
    ad = np.zeros((9, 9))
    ad[0:3, 0:3] = P
    ad[3:6, 0:3] = V
    ad[3:6, 3:6] = P
    ad[6:9, 0:3] = R
    ad[6:9, 6:9] = P
    return ad


def rotation_z(angle: float) -> NDArray[np.float64]:
    """DCM of a pure heading: body 1-axis at ``angle`` from the inertial 1-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalize(C: ArrayLike) -> NDArray[np.float64]:
    """Nearest rotation matrix in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(np.asarray(C, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R
