"""Single closed-loop simulation run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..controller import DEFAULT_K_I, DEFAULT_K_OMEGA, INTEGRATOR_LIMIT, RATE_INTEGRAL_LIMIT, TrackingController
from ..dynamics import ActuatorFilter, QuadParams, SaturationLimits, rk4_vector
from ..flatness import Helix, Hover, ReferenceTrack, build_reference_track
from ..lie import PoseSE23, rotation_z, so3_exp, so3_log
from ..linearize import DEFAULT_C1, Variant, jacobian_sequence
from ..lqr import GainSchedule, LqrWeights, riccati_sweep

DEFAULT_ACTUATOR_TAU = 0.02
DEFAULT_NOISE_STD = (0.01, 0.02, 0.02, 0.005)  # attitude rad, velocity m/s, position m, rate rad/s

TRAJECTORIES = {"helix": Helix, "hover": Hover}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines one run. Defaults describe the noise-free environment.

    ``initial_mode == "relative"`` offsets position and heading from the
    reference start (heading rotates the reference attitude about the
    inertial vertical). ``"absolute"`` places the vehicle at
    ``position_offset`` with a level attitude at ``heading``.
    """

    trajectory: str = "helix"
    trajectory_params: dict = field(default_factory=dict)
    duration: float = 10.0
    control_rate: float = 400.0
    plant_substeps: int = 5
    variant: Variant = Variant.SE23_NODRAG
    q_diag: tuple[float, ...] = (1, 1, 1, 1, 1, 1, 10, 10, 10, 0.1, 0.1, 0.1)
    r_diag: tuple[float, ...] = (1, 1, 1, 1)
    s_diag: tuple[float, ...] | None = None
    c1: float = DEFAULT_C1
    use_integrator: bool = True
    initial_mode: str = "relative"
    position_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    heading: float = 0.0
    true_params: QuadParams = field(default_factory=QuadParams)
    estimate_scale: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)  # mass, D, E, F
    actuator_tau: float = 0.0
    thrust_max_factor: float = 4.0
    omega_max: float = 8.0
    moment_max: float = 1.0
    noise_std: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    k_omega: tuple[float, float, float] = (5.0, 5.0, 5.0)
    k_i: tuple[float, float, float] = (3.0, 3.0, 3.0)
    integrator_limit: float = INTEGRATOR_LIMIT
    rate_integral_limit: float = RATE_INTEGRAL_LIMIT
    steady_window: float = 2.0
    seed: int = 0
    record_series: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if not (self.duration > 0.0 and self.control_rate > 0.0 and self.plant_substeps >= 1):
            raise ValueError("duration, control_rate and plant_substeps must be positive")
        if self.initial_mode not in ("relative", "absolute"):
            raise ValueError(f"initial_mode must be 'relative' or 'absolute', got {self.initial_mode!r}")
        if min(self.noise_std) < 0.0 or self.actuator_tau < 0.0:
            raise ValueError("noise standard deviations and actuator tau must be nonnegative")
        for name in ("q_diag", "r_diag", "position_offset", "estimate_scale", "noise_std", "k_omega", "k_i"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.s_diag is not None:
            object.__setattr__(self, "s_diag", tuple(float(x) for x in self.s_diag))

    @property
    def T(self) -> float:
        return 1.0 / self.control_rate

    @property
    def steps(self) -> int:
        return int(round(self.duration * self.control_rate))

    @property
    def weights(self) -> LqrWeights:
        w = LqrWeights.from_diagonals(self.q_diag, self.r_diag, self.s_diag)
        return w if self.use_integrator else w.without_integrator()

    @property
    def estimated_params(self) -> QuadParams:
        return self.true_params.scaled(*self.estimate_scale)

    def flat_trajectory(self):
        return TRAJECTORIES[self.trajectory](**self.trajectory_params)

    def limits(self) -> SaturationLimits:
        return SaturationLimits.for_params(
            self.true_params, self.thrust_max_factor, omega_max=self.omega_max, moment_max=self.moment_max
        )

    def replace(self, **changes: Any) -> ScenarioConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, QuadParams):
                value = value.to_dict()
            elif isinstance(value, Variant):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        if "true_params" in data and isinstance(data["true_params"], dict):
            p = dict(data["true_params"])
            for key in ("inertia", "drag_D", "drag_E", "drag_F"):
                if key in p:
                    arr = np.asarray(p[key], dtype=float)
                    p[key] = np.diag(arr) if arr.ndim == 1 else arr
            data["true_params"] = QuadParams(**p)
        return cls(**data)


@dataclass
class TrialResult:
    rmse_phi: float
    rmse_v: float
    rmse_r: float
    final_position_error: float
    steady_position_error: float
    seed: int
    kappa: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    series: dict[str, NDArray[np.float64]] | None = None

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("series")
        d["kappa"] = list(self.kappa)
        return d


def compute_rmse(dphi: NDArray, dv: NDArray, dr: NDArray) -> tuple[float, float, float]:
    """RMS over ticks of the per-tick Euclidean error norms."""
    out = []
    for series in (dphi, dv, dr):
        a = np.asarray(series, dtype=float)
        if a.size == 0:
            raise ValueError("error series is empty")
        norms = np.linalg.norm(a.reshape(len(a), -1), axis=1)
        out.append(float(np.sqrt(np.mean(norms**2))))
    return out[0], out[1], out[2]


def _params_key(p: QuadParams) -> str:
    return json.dumps(p.to_dict(), sort_keys=True)


@lru_cache(maxsize=16)
def _reference(traj_key: str, T: float, steps: int, est_key: str) -> ReferenceTrack:
    name, params = json.loads(traj_key)
    return build_reference_track(TRAJECTORIES[name](**params), T, steps, _params_from_key(est_key))


def _params_from_key(key: str) -> QuadParams:
    d = json.loads(key)
    return QuadParams(**{k: (np.asarray(v) if isinstance(v, list) else v) for k, v in d.items()})


@lru_cache(maxsize=32)
def _schedule(traj_key: str, T: float, steps: int, est_key: str, variant: str, c1: float, weights_key: str) -> GainSchedule:
    track = _reference(traj_key, T, steps, est_key)
    est = _params_from_key(est_key)
    w = json.loads(weights_key)
    weights = LqrWeights(np.asarray(w["Q"]), np.asarray(w["R"]), np.asarray(w["S"]))
    jac = jacobian_sequence(track, est, c1, variant)
    meta = {
        "trajectory": json.loads(traj_key),
        "T": T,
        "horizon": steps,
        "variant": variant,
        "c1": c1,
        "weights": w,
        "estimated_params": json.loads(est_key),
    }
    return riccati_sweep(jac, weights, meta)


def prepare(cfg: ScenarioConfig) -> tuple[ReferenceTrack, GainSchedule]:
    """Reference track and gain schedule for ``cfg`` (cached across runs)."""
    traj_key = json.dumps([cfg.trajectory, cfg.trajectory_params], sort_keys=True)
    est_key = _params_key(cfg.estimated_params)
    c1 = cfg.c1 if cfg.use_integrator else 0.0
    weights_key = json.dumps(cfg.weights.to_dict(), sort_keys=True)
    track = _reference(traj_key, cfg.T, cfg.steps, est_key)
    schedule = _schedule(traj_key, cfg.T, cfg.steps, est_key, cfg.variant.value, c1, weights_key)
    return track, schedule


def initial_state(cfg: ScenarioConfig, track: ReferenceTrack) -> NDArray[np.float64]:
    ref0 = track.sample(0)
    offset = np.asarray(cfg.position_offset)
    if cfg.initial_mode == "relative":
        C0 = rotation_z(cfg.heading) @ ref0.C_ar
        r0 = ref0.r_r + offset
    else:
        C0 = rotation_z(cfg.heading)
        r0 = offset
    omega0 = C0.T @ ref0.C_ar @ ref0.omega_r
    return np.concatenate([C0.ravel(), ref0.v_r, r0, omega0])


def run_scenario(cfg: ScenarioConfig, kappa: tuple[float, ...] | None = None) -> TrialResult:
    """Simulate ``cfg`` and score the true-state tracking error over the whole run."""
    track, schedule = prepare(cfg)
    T, N = cfg.T, cfg.steps
    est = cfg.estimated_params
    p = cfg.true_params
    limits = cfg.limits()
    ctrl = TrackingController(
        schedule=schedule,
        variant=cfg.variant,
        est=est,
        limits=limits,
        T=T,
        c1=cfg.c1,
        K_omega=np.diag(cfg.k_omega),
        K_i=np.diag(cfg.k_i),
        use_integrator=cfg.use_integrator,
        integrator_limit=cfg.integrator_limit,
        rate_integral_limit=cfg.rate_integral_limit,
    )
    actuator = ActuatorFilter(cfg.actuator_tau, T)
    rng = np.random.default_rng(cfg.seed)
    noise = np.asarray(cfg.noise_std)
    noisy = bool(np.any(noise > 0.0))
    dt = T / cfg.plant_substeps

    y = initial_state(cfg, track)
    dphi = np.empty((N + 1, 3))
    dv = np.empty((N + 1, 3))
    dr = np.empty((N + 1, 3))
    if cfg.record_series:
        log = {name: np.zeros((N, width)) for name, width in
               (("xi", 9), ("xi_i", 3), ("thrust", 1), ("omega_cmd", 3), ("moment", 3))}

    for k in range(N + 1):
        C, v, r, w = y[:9].reshape(3, 3), y[9:12], y[12:15], y[15:18]
        dphi[k] = so3_log(C.T @ track.C_ar[k])
        dv[k] = track.v_r[k] - v
        dr[k] = track.r_r[k] - r
        if k == N:
            break
        if noisy:
            eta = rng.normal(0.0, 1.0, 12) * np.repeat(noise, 3)
            X = PoseSE23(C @ so3_exp(eta[0:3]), v + eta[3:6], r + eta[6:9])
            w_meas = w + eta[9:12]
        else:
            X = PoseSE23(C, v, r)
            w_meas = w
        xi_i = ctrl.state.xi_i
        err, cmd, moment = ctrl.step(X, w_meas, track.sample(k))
        applied = actuator(np.concatenate([[cmd.thrust], moment]))
        if cfg.record_series:
            log["xi"][k] = err.xi
            log["xi_i"][k] = xi_i
            log["thrust"][k] = cmd.thrust
            log["omega_cmd"][k] = cmd.omega_cmd
            log["moment"][k] = moment
        y = rk4_vector(y, applied[0], applied[1:], p, dt, cfg.plant_substeps)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"plant state diverged at t={k * T:.4f} s")

    rmse = compute_rmse(dphi, dv, dr)
    pos_norm = np.linalg.norm(dr, axis=1)
    window = max(1, int(round(cfg.steady_window / T)))
    series = None
    if cfg.record_series:
        series = {"t": track.t[:N].copy(), **log, "dphi": dphi, "dv": dv, "dr": dr}
    return TrialResult(
        rmse_phi=rmse[0],
        rmse_v=rmse[1],
        rmse_r=rmse[2],
        final_position_error=float(pos_norm[-1]),
        steady_position_error=float(np.mean(pos_norm[-window:])),
        seed=cfg.seed,
        kappa=tuple(kappa) if kappa is not None else tuple(cfg.estimate_scale),
        series=series,
    )
