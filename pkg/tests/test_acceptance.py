"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import time
from functools import lru_cache

import numpy as np

from se23lqr.dynamics import QuadParams
from se23lqr.flatness import Helix, Hover, ReferenceSample, build_reference_track, reference_attitude_thrust
from se23lqr.harness.cli import main as cli_main
from se23lqr.harness.experiments import (
    ALL_VARIANTS,
    COMPONENTS,
    DRAG_FREE_PAIR,
    HEADING_GRID_DEG,
    MonteCarloConfig,
    heading_sweep,
    monte_carlo,
    uncertainty_study,
)
from se23lqr.harness.scenario import ScenarioConfig, run_scenario
from se23lqr.lie import se23_exp, se23_log, se23_wedge, so3_exp
from se23lqr.linearize import (
    DiscreteJacobians,
    ErrorJacobians,
    Variant,
    continuous_jacobians,
    discretize_zoh,
    finite_difference_check,
    jacobian_sequence,
)
from se23lqr.lqr import LqrWeights, infinite_horizon_check, riccati_sweep

P = QuadParams()
T = 0.0025
PAIRS = {"drag-free": ("se23-nodrag", "conventional-nodrag"), "with-drag": ("se23-drag", "conventional-drag")}


def series_expm(M, terms=30):
    out, term = np.eye(len(M)), np.eye(len(M))
    for n in range(1, terms):
        term = term @ M / n
        out = out + term
    return out


@lru_cache(maxsize=1)
def sweep_table():
    rows, times = [], []
    for h in np.deg2rad(HEADING_GRID_DEG):
        for v in ALL_VARIANTS:
            t0 = time.perf_counter()
            rows += heading_sweep(ScenarioConfig(), [h], [v])
            times.append(time.perf_counter() - t0)
    table = {(round(np.rad2deg(r.label["heading"])), r.label["variant"]): r.result for r in rows}
    return table, max(times)


def test_criterion_01_lie_round_trip(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_log, worst_exp = 0.0, 0.0
    for _ in range(1000):
        axis = rng.normal(size=3)
        phi = rng.uniform(0.0, np.pi - 0.01) * axis / np.linalg.norm(axis)
        xi = np.concatenate([phi, rng.normal(size=6)])
        X = se23_exp(xi)
        worst_log = max(worst_log, np.max(np.abs(se23_log(X) - xi)))
        worst_exp = max(worst_exp, np.max(np.abs(X.matrix() - series_expm(se23_wedge(xi)))))
    elapsed = time.perf_counter() - t0
    ok = worst_log < 1e-9 and worst_exp < 1e-10 and elapsed < 5.0
    criterion(1, "SE2(3) exp/log round trip", ok,
              f"log err {worst_log:.2e} (<1e-9), exp vs series {worst_exp:.2e} (<1e-10), {elapsed:.2f} s (<5 s)")
    assert ok


def test_criterion_02_jacobians_match_finite_differences(criterion):
    track = build_reference_track(Helix(), T, 4000, P)
    idx = np.random.default_rng(2).choice(track.horizon + 1, 20, replace=False)
    worst = {v.value: max(finite_difference_check(track.sample(int(k)), P, v, eps=1e-6) for k in idx)
             for v in Variant}
    ok = all(w < 1e-4 for w in worst.values())
    criterion(2, "Jacobians vs finite differences", ok,
              ", ".join(f"{k} {w:.1e}" for k, w in worst.items()) + " (<1e-4, 20 samples)")
    assert ok


def test_criterion_03_attitude_independence(criterion):
    track = build_reference_track(Helix(), T, 400, P)
    ref = track.sample(123)
    ok = True
    conventional_differs = True
    for phi in ([0.5, -1.0, 2.0], [3.0, 0.0, 0.0], [0.0, 0.1, -0.2]):
        other = ReferenceSample(so3_exp(phi) @ ref.C_ar, ref.v_r, ref.r_r, ref.omega_r, ref.thrust_r)
        a, b = (continuous_jacobians(x, P, variant="se23-nodrag") for x in (ref, other))
        da, db = discretize_zoh(a, T), discretize_zoh(b, T)
        ok &= np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)
        ok &= np.array_equal(da.A, db.A) and np.array_equal(da.B, db.B)
        c, d = (continuous_jacobians(x, P, variant="conventional-nodrag") for x in (ref, other))
        conventional_differs &= float(np.max(np.abs(c.A - d.A))) > 1e-3
    ok = bool(ok and conventional_differs)
    criterion(3, "drag-free SE2(3) Jacobians independent of attitude", ok,
              f"SE2(3) bitwise equal: {ok}, conventional A varies: {conventional_differs}")
    assert ok


def test_criterion_04_zoh_discretization(criterion):
    Tz = 0.01
    B = np.zeros((12, 4))
    B[0:3, 1:4] = np.eye(3)
    d = discretize_zoh(ErrorJacobians(np.zeros((12, 12)), B, Variant.SE23_DRAG), Tz)
    err = max(np.max(np.abs(d.A - np.eye(12))), np.max(np.abs(d.B - Tz * B)))
    A = np.zeros((12, 12))
    A[4, 4] = -3.0
    A[6, 3] = 1.0
    B = np.zeros((12, 4))
    B[3, 0] = 1.0
    d = discretize_zoh(ErrorJacobians(A, B, Variant.SE23_DRAG), Tz)
    err = max(err, abs(d.A[4, 4] - np.exp(-3.0 * Tz)), abs(d.A[6, 3] - Tz), abs(d.B[6, 0] - Tz**2 / 2))
    J = continuous_jacobians(build_reference_track(Helix(), T, 10, P).sample(5), P, variant="se23-drag")
    gaps = []
    for Ts in (1e-3, 1e-4):
        dd = discretize_zoh(J, Ts)
        gaps.append(max(np.max(np.abs(dd.A - np.eye(12) - Ts * J.A)), np.max(np.abs(dd.B - Ts * J.B))))
    ratio = gaps[0] / gaps[1]
    ok = err < 1e-10 and 90.0 < ratio < 110.0
    criterion(4, "Van Loan discretization", ok, f"closed-form err {err:.1e} (<1e-10), O(T^2) ratio {ratio:.2f} (~100)")
    assert ok


def test_criterion_05_riccati(criterion):
    one = np.eye(1)
    sched = riccati_sweep([DiscreteJacobians(one, one, 1.0)] * 2, LqrWeights(one, one, 0 * one))
    k0_err = abs(sched.gains[0, 0, 0] - 0.5)
    Td = 0.01
    A = np.array([[1.0, Td], [0.0, 1.0]])
    B = np.array([[Td**2 / 2], [Td]])
    residual, _ = infinite_horizon_check(A, B, LqrWeights(np.eye(2), np.eye(1), np.eye(2)), 5000)
    track = build_reference_track(Helix(), T, 400, P)
    jac = jacobian_sequence(track, P, variant="se23-drag")
    w = LqrWeights.default()
    base = riccati_sweep(jac, w).gains
    scale_err = max(np.max(np.abs(riccati_sweep(jac, w.scaled(a)).gains - base)) for a in (0.01, 50.0))
    ok = k0_err < 1e-12 and residual < 1e-8 and scale_err < 1e-10
    criterion(5, "Riccati sweep", ok,
              f"|K0-0.5| {k0_err:.1e} (<1e-12), 5000-step residual {residual:.1e} (<1e-8), "
              f"scaling gain change {scale_err:.1e} (<1e-10)")
    assert ok


def test_criterion_06_hover_feedforward(criterion):
    C, thrust, _ = reference_attitude_thrust(Hover()(0.0), P)
    thrust_err = abs(thrust - 10.791)
    att_err = float(np.max(np.abs(C - np.eye(3))))
    ok = thrust_err < 1e-9 and att_err == 0.0
    criterion(6, "hover feedforward", ok, f"thrust {thrust:.12f} N (10.791 +- 1e-9), attitude err {att_err:.1e}")
    assert ok


def test_criterion_07_large_heading_transient(criterion):
    table, slowest = sweep_table()
    runs = {v.value: table[(180, v.value)] for v in ALL_VARIANTS}
    converged = {k: r.final_position_error < 0.05 for k, r in runs.items()}
    best = {c: min(runs, key=lambda k: getattr(runs[k], c)) for c in COMPONENTS}
    lowest = all(b == "se23-nodrag" for b in best.values())
    ok = all(converged.values()) and lowest and slowest < 10.0
    detail = ("final |dr| " + ", ".join(f"{k} {r.final_position_error:.4f}" for k, r in runs.items())
              + " | lowest RMSE " + ", ".join(f"{c}: {best[c]}" for c in COMPONENTS)
              + " | se23-nodrag " + "/".join(f"{getattr(runs['se23-nodrag'], c):.3f}" for c in COMPONENTS)
              + f" | slowest run {slowest:.1f} s")
    criterion(7, "180 deg heading, se23-nodrag lowest transient RMSE", ok, detail)
    assert ok


def test_criterion_08_heading_sweep_ordering(criterion):
    table, _ = sweep_table()
    violations = []
    for h in (120, 150, 180):
        for scheme, (se23, conv) in PAIRS.items():
            for c in COMPONENTS:
                a, b = getattr(table[(h, se23)], c), getattr(table[(h, conv)], c)
                if a > b:
                    violations.append(f"{h} deg {scheme} {c}: {a:.4f} > {b:.4f}")
    ok = not violations
    criterion(8, "SE2(3) <= conventional for headings >= 120 deg", ok,
              "all 18 comparisons hold" if ok else f"{len(violations)}/18 violated: " + "; ".join(violations))
    assert ok


def test_criterion_09_parametric_uncertainty(criterion):
    rows = uncertainty_study(ScenarioConfig(), scale=0.8)
    steady = {(r.label["variant"], r.label["integrator"]): r.result.steady_position_error for r in rows}
    # The exact-parameter clause is the integrator-off baseline; the integrator-on value is reported only.
    exact = {v.value: run_scenario(ScenarioConfig(variant=v, heading=np.pi, use_integrator=False)).steady_position_error
             for v in DRAG_FREE_PAIR}
    exact_on = {v.value: run_scenario(ScenarioConfig(variant=v, heading=np.pi)).steady_position_error
                for v in DRAG_FREE_PAIR}
    on_ok = all(steady[(v.value, True)] < 0.05 for v in DRAG_FREE_PAIR)
    off_ok = all(steady[(v.value, False)] > steady[(v.value, True)] for v in DRAG_FREE_PAIR)
    exact_ok = all(e < 1e-2 for e in exact.values())
    ok = on_ok and off_ok and exact_ok
    detail = "; ".join(
        f"{v.value}: on {steady[(v.value, True)]:.4f} m, off {steady[(v.value, False)]:.4f} m, "
        f"exact off {exact[v.value]:.4f} m (exact on {exact_on[v.value]:.4f} m)" for v in DRAG_FREE_PAIR
    ) + f" | on<0.05: {on_ok}, off>on: {off_ok}, exact<0.01: {exact_ok}"
    criterion(9, "80% parameter scaling with/without integrator", ok, detail)
    assert ok


def test_criterion_10_monte_carlo(criterion):
    t0 = time.perf_counter()
    report = monte_carlo(MonteCarloConfig(trials=100, master_seed=0))
    elapsed = time.perf_counter() - t0
    se23, conv = (v.value for v in DRAG_FREE_PAIR)
    parts, ordered, banded = [], True, True
    for c in COMPONENTS:
        a, b = report.stats(se23, c), report.stats(conv, c)
        ordered &= a.mean < b.mean
        banded &= a.within_band >= 0.95 and b.within_band >= 0.95
        parts.append(f"{c} {a.mean:.3f} vs {b.mean:.3f} [{a.lower:.3f}, {a.upper:.3f}]")
    ok = ordered and banded and elapsed < 600.0
    criterion(10, "Monte-Carlo mean RMSE, SE2(3) below conventional", ok,
              "; ".join(parts) + f" | within band >=95%: {banded} | {elapsed:.0f} s (<600 s)")
    assert ok


def _run_all(out):
    common = ["--out-dir"]
    cfg = out.parent / "det.toml"
    cfg.write_text("[scenario]\nduration = 1.0\nheading_deg = 150\nnoise_std = [0.01, 0.02, 0.02, 0.005]\n"
                   "actuator_tau = 0.02\nseed = 11\n[sweep]\nheadings_deg = [0, 90, 180]\n"
                   "[monte_carlo]\ntrials = 4\n")
    codes = []
    for cmd in ("simulate", "sweep-heading", "uncertainty", "monte-carlo", "gains"):
        codes.append(cli_main([cmd, "--config", str(cfg), *common, str(out / cmd)]))
    return codes


def test_criterion_11_determinism(criterion, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = _run_all(a) + _run_all(b)
    mismatched, count = [], 0
    for sub in sorted(p.name for p in a.iterdir()):
        names = sorted(p.name for p in (a / sub).iterdir())
        count += len(names)
        if names != sorted(p.name for p in (b / sub).iterdir()):
            mismatched.append(f"{sub}: file sets differ")
            continue
        _, diff, errs = filecmp.cmpfiles(a / sub, b / sub, names, shallow=False)
        mismatched += [f"{sub}/{n}" for n in diff + errs]
    ok = not mismatched and all(c == 0 for c in codes) and count > 0
    criterion(11, "byte-identical outputs on repeat", ok,
              f"{count} files compared, mismatches: {mismatched or 'none'}")
    assert ok
