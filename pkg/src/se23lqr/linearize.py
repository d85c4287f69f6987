"""Error-state Jacobians about a reference trajectory and their ZOH discretization.

Error state ordering is ``(xi_phi, xi_v, xi_r, xi_i)`` (12 states) and the
input ordering is ``(d_thrust, d_omega)`` (4 inputs) for every variant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .dynamics import E3, QuadParams
from .flatness import ReferenceSample, ReferenceTrack
from .lie import se23_adjoint_algebra, se23_exp, skew, so3_exp, unskew

N_STATE = 12
N_INPUT = 4
DEFAULT_C1 = 1.0


class Variant(str, enum.Enum):
    SE23_DRAG = "se23-drag"
    SE23_NODRAG = "se23-nodrag"
    CONVENTIONAL_DRAG = "conventional-drag"
    CONVENTIONAL_NODRAG = "conventional-nodrag"

    @property
    def error(self) -> str:
        return "se23" if self.value.startswith("se23") else "conventional"

    @property
    def drag(self) -> bool:
        return self.value.endswith("-drag")

    @classmethod
    def parse(cls, value: str | Variant) -> Variant:
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown variant {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class ErrorJacobians:
    A: NDArray[np.float64]
    B: NDArray[np.float64]
    variant: Variant


@dataclass(frozen=True)
class DiscreteJacobians:
    A: NDArray[np.float64]
    B: NDArray[np.float64]
    T: float


def continuous_jacobians(
    ref: ReferenceSample, params: QuadParams, c1: float = DEFAULT_C1, variant: Variant | str = Variant.SE23_DRAG
) -> ErrorJacobians:
    variant = Variant.parse(variant)
    m = params.mass
    D = params.drag_D if variant.drag else np.zeros((3, 3))
    Car = np.asarray(ref.C_ar)
    v_body = Car.T @ ref.v_r
    W = skew(ref.omega_r)
    I3 = np.eye(3)

    drag_coupling = skew(D @ v_body) - D @ skew(v_body)
    thrust_coupling = skew(ref.thrust_r * E3)

    A = np.zeros((N_STATE, N_STATE))
    B = np.zeros((N_STATE, N_INPUT))
    if variant.error == "se23":
        A[3:6, 0:3] = (drag_coupling - thrust_coupling) / m
        A[3:6, 3:6] = -W - D / m
        A[6:9, 6:9] = -W
        B[3:6, 0] = E3 / m
    else:
        A[3:6, 0:3] = Car @ (drag_coupling - thrust_coupling) / m
        A[3:6, 3:6] = -(Car @ D @ Car.T) / m
        B[3:6, 0] = Car @ E3 / m
    A[6:9, 3:6] = I3
    A[9:12, 3:6] = I3
    A[9:12, 6:9] = c1 * I3
    B[0:3, 1:4] = I3
    return ErrorJacobians(A, B, variant)


def _van_loan_blocks(A: NDArray[np.float64], B: NDArray[np.float64], T: float) -> NDArray[np.float64]:
    n, p = A.shape[-1], B.shape[-1]
    M = np.zeros(A.shape[:-2] + (n + p, n + p))
    M[..., :n, :n] = A * T
    M[..., :n, n:] = B * T
    return scipy.linalg.expm(M)


def discretize_zoh(J: ErrorJacobians, T: float) -> DiscreteJacobians:
    """Exact zero-order-hold pair from the exponential of ``[[A, B], [0, 0]] T``."""
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    n = J.A.shape[0]
    E = _van_loan_blocks(J.A, J.B, T)
    return DiscreteJacobians(E[:n, :n], E[:n, n:], T)


@dataclass(frozen=True)
class JacobianSequence:
    A: NDArray[np.float64]  # (N, 12, 12)
    B: NDArray[np.float64]  # (N, 12, 4)
    T: float
    variant: Variant

    def __len__(self) -> int:
        return len(self.A)

    def __getitem__(self, k: int) -> DiscreteJacobians:
        return DiscreteJacobians(self.A[k], self.B[k], self.T)

    def save(self, path: str | Path) -> None:
        np.savez(path, A=self.A, B=self.B, T=self.T, variant=self.variant.value)


def jacobian_sequence(
    track: ReferenceTrack, params: QuadParams, c1: float = DEFAULT_C1, variant: Variant | str = Variant.SE23_DRAG
) -> JacobianSequence:
    """Discrete Jacobians for samples ``k = 0..N-1`` of ``track``."""
    variant = Variant.parse(variant)
    N = track.horizon
    Ac = np.empty((N, N_STATE, N_STATE))
    Bc = np.empty((N, N_STATE, N_INPUT))
    for k in range(N):
        J = continuous_jacobians(track.sample(k), params, c1, variant)
        Ac[k], Bc[k] = J.A, J.B
    E = _van_loan_blocks(Ac, Bc, track.T)
    return JacobianSequence(E[:, :N_STATE, :N_STATE].copy(), E[:, :N_STATE, N_STATE:].copy(), track.T, variant)


# --- finite-difference oracle on the nonlinear error dynamics ---------------

def _series_inverse_right_jacobian(ad: NDArray[np.float64], terms: int = 30) -> NDArray[np.float64]:
    """Inverse of ``sum_n (-ad)^n / (n+1)!``; exact to rounding for small ``ad``."""
    n = ad.shape[0]
    Jr = np.zeros((n, n))
    term = np.eye(n)
    fact = 1.0
    for i in range(terms):
        fact *= i + 1
        Jr += term / fact
        term = term @ (-ad)
    return np.linalg.inv(Jr)


def _model_accel(C, v, thrust, p: QuadParams) -> NDArray[np.float64]:
    return p.gravity_vector + (C[:, 2] * thrust - C @ p.drag_D @ C.T @ v) / p.mass


def nonlinear_error_rate(
    ref: ReferenceSample,
    params: QuadParams,
    variant: Variant | str,
    d_state: NDArray[np.float64],
    d_input: NDArray[np.float64],
    c1: float = DEFAULT_C1,
) -> NDArray[np.float64]:
    """Exact time derivative of the 12-dimensional error state.

    The true state is reconstructed from the reference and the error, the
    plant and the reference are propagated through the rigid-body model,
    and the derivative of the error definition is formed without any
    linearization. Drag-free variants zero the plant drag.
    """
    variant = Variant.parse(variant)
    p = params if variant.drag else replace(params, drag_D=np.zeros((3, 3)))
    Cr, vr, rr, wr = ref.C_ar, ref.v_r, ref.r_r, ref.omega_r
    Cr_dot = Cr @ skew(wr)
    vr_dot = _model_accel(Cr, vr, ref.thrust_r, p)
    thrust = ref.thrust_r - d_input[0]
    d_omega = d_input[1:4]

    if variant.error == "se23":
        xi = d_state[:9]
        dX = se23_exp(xi)
        dC = dX.C
        C = Cr @ dC.T
        v = vr - C @ dX.v
        r = rr - C @ dX.r
        w = dC @ wr - d_omega
        C_dot = C @ skew(w)
        v_dot = _model_accel(C, v, thrust, p)
        # d/dt of dC = C^T Cr, dv = C^T (vr - v), dr = C^T (rr - r)
        dC_dot = C_dot.T @ Cr + C.T @ Cr_dot
        dv_dot = C_dot.T @ (vr - v) + C.T @ (vr_dot - v_dot)
        dr_dot = C_dot.T @ (rr - r) + C.T @ (vr - v)
        # Left-trivialized velocity dX^-1 dX_dot.
        eta = np.concatenate([unskew(dC.T @ dC_dot), dC.T @ dv_dot, dC.T @ dr_dot])
        xi_dot = _series_inverse_right_jacobian(se23_adjoint_algebra(xi)) @ eta
        integ_dot = c1 * dX.r + dX.v
        return np.concatenate([xi_dot, integ_dot])

    phi, dv, dr = d_state[:3], d_state[3:6], d_state[6:9]
    dC = so3_exp(phi)
    C = Cr @ dC.T
    v = vr - dv
    w = dC @ wr - d_omega
    C_dot = C @ skew(w)
    v_dot = _model_accel(C, v, thrust, p)
    dC_dot = C_dot.T @ Cr + C.T @ Cr_dot
    eta = unskew(dC.T @ dC_dot)
    phi_dot = _series_inverse_right_jacobian(skew(phi)) @ eta
    return np.concatenate([phi_dot, vr_dot - v_dot, vr - v, c1 * dr + dv])


def finite_difference_jacobians(
    ref: ReferenceSample,
    params: QuadParams,
    variant: Variant | str,
    eps: float = 1e-6,
    c1: float = DEFAULT_C1,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Central differences of :func:`nonlinear_error_rate` about zero error."""
    if not 1e-8 < eps < 1e-4:
        raise ValueError(f"eps must lie in (1e-8, 1e-4), got {eps}")
    A = np.empty((N_STATE, N_STATE))
    B = np.empty((N_STATE, N_INPUT))
    zs, zu = np.zeros(N_STATE), np.zeros(N_INPUT)
    for j in range(N_STATE):
        e = zs.copy()
        e[j] = eps
        A[:, j] = (nonlinear_error_rate(ref, params, variant, e, zu, c1)
                   - nonlinear_error_rate(ref, params, variant, -e, zu, c1)) / (2 * eps)
    for j in range(N_INPUT):
        e = zu.copy()
        e[j] = eps
        B[:, j] = (nonlinear_error_rate(ref, params, variant, zs, e, c1)
                   - nonlinear_error_rate(ref, params, variant, zs, -e, c1)) / (2 * eps)
    return A, B


def finite_difference_check(
    ref: ReferenceSample,
    params: QuadParams,
    variant: Variant | str,
    eps: float = 1e-6,
    c1: float = DEFAULT_C1,
) -> float:
    """Worst deviation between the analytic and numerical ``[A B]``.

    Normalized by ``max(1, max|[A B]|)`` so structural zeros do not divide
    by zero.
    """
    J = continuous_jacobians(ref, params, c1, variant)
    A_fd, B_fd = finite_difference_jacobians(ref, params, variant, eps, c1)
    analytic = np.hstack([J.A, J.B])
    numeric = np.hstack([A_fd, B_fd])
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(numeric - analytic)) / scale)
