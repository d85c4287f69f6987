import numpy as np
import pytest

from se23lqr.dynamics import QuadParams
from se23lqr.flatness import (
    FlatSample,
    Helix,
    Hover,
    ReferenceGenerationError,
    build_reference_track,
    helix_eval,
    reference_angular_velocity,
    reference_attitude_thrust,
)
from se23lqr.lie import so3_exp

P = QuadParams()
T = 0.0025


def test_helix_samples():
    s = helix_eval(0.0)
    assert np.allclose(s.position, [0, 3, 0]) and s.yaw == 0.0
    assert np.allclose(s.velocity, [3, 0, 0.5])
    assert np.allclose(helix_eval(np.pi / 2).acceleration, [-3, 0, 0], atol=1e-12)
    with pytest.raises(ValueError):
        helix_eval(-1.0)


def test_helix_derivatives_match_finite_differences():
    h = Helix()
    t, e = 1.3, 1e-6
    dp = (h(t + e).position - h(t - e).position) / (2 * e)
    dv = (h(t + e).velocity - h(t - e).velocity) / (2 * e)
    assert np.allclose(dp, h(t).velocity, atol=1e-8)
    assert np.allclose(dv, h(t).acceleration, atol=1e-8)


def test_hover_feedforward():
    C, thrust, _ = reference_attitude_thrust(Hover()(0.0), P)
    assert np.allclose(C, np.eye(3), atol=1e-15)
    assert abs(thrust - 1.1 * 9.81) < 1e-9
    assert abs(thrust - 10.791) < 1e-9


def test_hover_with_yaw():
    C, _, _ = reference_attitude_thrust(Hover(yaw=np.pi / 2)(0.0), P)
    assert np.allclose(C, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_helix_fixed_point():
    flat = helix_eval(1.0)
    C, thrust, it = reference_attitude_thrust(flat, P)
    assert it <= 10
    # Oracle: plain iteration run to 100 passes.
    Cb = np.zeros((3, 3))
    for _ in range(100):
        f = P.mass * flat.acceleration + P.mass * 9.81 * np.array([0, 0, 1.0]) + Cb @ P.drag_D @ Cb.T @ flat.velocity
        r3 = f / np.linalg.norm(f)
        r2 = np.cross(r3, [1.0, 0, 0])
        r2 /= np.linalg.norm(r2)
        Cb = np.column_stack([np.cross(r2, r3), r2, r3])
    f_fixed = f
    residual = P.mass * flat.acceleration + P.mass * 9.81 * np.array([0, 0, 1.0]) + C @ P.drag_D @ C.T @ flat.velocity
    assert np.max(np.abs(residual - thrust * C[:, 2])) < 1e-9
    assert np.allclose(C, Cb, atol=1e-10)
    assert np.isclose(thrust, np.linalg.norm(f_fixed), atol=1e-9)


def test_degenerate_force():
    free_fall = FlatSample(np.zeros(3), np.zeros(3), np.array([0, 0, -9.81]))
    with pytest.raises(ReferenceGenerationError):
        reference_attitude_thrust(free_fall, P)


def test_singular_triad():
    # Thrust along inertial x with zero yaw: heading vector parallel to r3.
    sideways = FlatSample(np.zeros(3), np.zeros(3), np.array([5.0, 0, -9.81]))
    with pytest.raises(ReferenceGenerationError):
        reference_attitude_thrust(sideways, P.without_drag())


def test_non_convergence():
    with pytest.raises(ReferenceGenerationError):
        reference_attitude_thrust(helix_eval(1.0), P, max_iter=2)


def test_angular_velocity_examples():
    C = so3_exp([0.1, 0.2, 0.3])
    assert np.array_equal(reference_angular_velocity(C, C, T), np.zeros(3))
    assert np.allclose(reference_angular_velocity(np.eye(3), so3_exp([0, 0, 0.01]), T), [0, 0, 4], atol=1e-12)
    w0 = np.array([0.4, -1.2, 2.0])
    assert np.allclose(reference_angular_velocity(C, C @ so3_exp(T * w0), T), w0, atol=1e-12)
    with pytest.raises(ReferenceGenerationError):
        reference_angular_velocity(np.eye(3), np.diag([1.0, -1.0, -1.0]), T)
    with pytest.raises(ValueError):
        reference_angular_velocity(C, C, 0.0)


def test_hover_track():
    tr = build_reference_track(Hover((1.0, 2.0, 3.0)), T, 10, P)
    assert np.allclose(tr.C_ar, np.eye(3))
    assert np.allclose(tr.omega_r, 0.0)
    assert np.allclose(tr.thrust_r, P.mass * 9.81)


def test_helix_track():
    tr = build_reference_track(Helix(), T, 4000, P)
    assert len(tr) == 4001 and tr.horizon == 4000
    analytic = np.array([Helix()(tk).velocity for tk in tr.t])
    assert np.array_equal(tr.v_r, analytic)
    assert np.array_equal(tr.omega_r[0], tr.omega_r[1])
    assert np.all(tr.thrust_r > 0)
    err = np.abs(np.einsum("nji,njk->nik", tr.C_ar, tr.C_ar) - np.eye(3))
    assert err.max() < 1e-10
    # Poisson consistency.
    for k in range(1, 200):
        assert np.max(np.abs(tr.C_ar[k - 1] @ so3_exp(T * tr.omega_r[k]) - tr.C_ar[k])) < 1e-9


def test_short_track():
    assert len(build_reference_track(Helix(), T, 2, P)) == 3
    with pytest.raises(ValueError):
        build_reference_track(Helix(), T, 1, P)


def test_drag_free_force_reconstruction():
    p = P.without_drag()
    tr = build_reference_track(Helix(), T, 400, p)
    g = np.array([0, 0, 9.81])
    f = tr.C_ar[:, :, 2] * tr.thrust_r[:, None]
    assert np.max(np.abs(f - p.mass * (tr.accel_r + g))) < 1e-9


def test_track_csv(tmp_path):
    tr = build_reference_track(Helix(), T, 3, P)
    path = tmp_path / "ref.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("t,r_x,r_y,r_z")
