"""Batch experiments built on :func:`run_scenario`: heading sweep,
parametric-uncertainty study and the Monte-Carlo campaign."""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..linearize import Variant
from .scenario import DEFAULT_ACTUATOR_TAU, DEFAULT_NOISE_STD, ScenarioConfig, TrialResult, run_scenario

HEADING_GRID_DEG = (0, 30, 60, 90, 120, 150, 180)
ALL_VARIANTS = (
    Variant.SE23_NODRAG,
    Variant.CONVENTIONAL_NODRAG,
    Variant.SE23_DRAG,
    Variant.CONVENTIONAL_DRAG,
)
DRAG_FREE_PAIR = (Variant.SE23_NODRAG, Variant.CONVENTIONAL_NODRAG)
COMPONENTS = ("rmse_phi", "rmse_v", "rmse_r")
# Piecewise-linear interpolation at plotting positions (i - 0.5) / n. Unlike the
# (i - 1) / (n - 1) rule it keeps at least 95% of 100 trials inside (2.5, 97.5).
PERCENTILE_METHOD = "hazen"


class TrialFailure(RuntimeError):
    def __init__(self, trial: int, variant: str, cause: BaseException):
        super().__init__(f"trial {trial} ({variant}) failed: {type(cause).__name__}: {cause}")
        self.trial = trial


@dataclass(frozen=True)
class ResultRow:
    """One labelled run inside an experiment table."""

    experiment: str
    label: dict
    result: TrialResult

    def summary(self) -> dict:
        return {"experiment": self.experiment, **self.label, **self.result.summary()}


def _perfect(base: ScenarioConfig) -> ScenarioConfig:
    return base.replace(
        estimate_scale=(1.0, 1.0, 1.0, 1.0),
        noise_std=(0.0, 0.0, 0.0, 0.0),
        actuator_tau=0.0,
        initial_mode="relative",
    )


def heading_sweep(
    base: ScenarioConfig,
    headings: Sequence[float] | None = None,
    variants: Sequence[Variant] = ALL_VARIANTS,
) -> list[ResultRow]:
    """Every variant at every initial heading (rad) in a perfect environment."""
    if headings is None:
        headings = np.deg2rad(HEADING_GRID_DEG)
    headings = [float(h) for h in headings]
    if not headings:
        raise ValueError("heading list is empty")
    cfg0 = _perfect(base)
    rows = []
    for h in headings:
        for v in variants:
            res = run_scenario(cfg0.replace(heading=h, variant=v))
            rows.append(ResultRow("sweep-heading", {"heading": h, "variant": Variant(v).value}, res))
    return rows


def uncertainty_study(
    base: ScenarioConfig,
    scale: float = 0.8,
    heading: float = np.pi,
    variants: Sequence[Variant] = DRAG_FREE_PAIR,
) -> list[ResultRow]:
    """Both controllers with and without the integrator, estimates at ``scale`` x truth."""
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    cfg0 = _perfect(base).replace(estimate_scale=(scale,) * 4, heading=heading)
    rows = []
    for v in variants:
        for integ in (True, False):
            res = run_scenario(cfg0.replace(variant=v, use_integrator=integ))
            label = {"variant": Variant(v).value, "integrator": integ, "scale": scale}
            rows.append(ResultRow("uncertainty", label, res))
    return rows


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sampling protocol. ``sigma_kappa`` is ordered (mass, E, F, D)."""

    base: ScenarioConfig = field(
        default_factory=lambda: ScenarioConfig(
            initial_mode="absolute", actuator_tau=DEFAULT_ACTUATOR_TAU, noise_std=DEFAULT_NOISE_STD
        )
    )
    trials: int = 100
    sigma_kappa: tuple[float, float, float, float] = (0.03, 0.15, 0.15, 0.15)
    sigma_pos: float = 1.0
    heading_std: float = np.pi
    percentiles: tuple[float, float] = (2.5, 97.5)
    variants: tuple[Variant, ...] = DRAG_FREE_PAIR
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if min(self.sigma_kappa) < 0.0 or self.sigma_pos < 0.0 or self.heading_std < 0.0:
            raise ValueError("sigmas must be nonnegative")
        lo, hi = self.percentiles
        if not 0.0 <= lo < hi <= 100.0:
            raise ValueError(f"invalid percentile bounds {self.percentiles}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        object.__setattr__(self, "variants", tuple(Variant.parse(v) for v in self.variants))

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "trials": self.trials,
            "sigma_kappa": list(self.sigma_kappa),
            "sigma_pos": self.sigma_pos,
            "heading_std": self.heading_std,
            "percentiles": list(self.percentiles),
            "variants": [v.value for v in self.variants],
            "master_seed": self.master_seed,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class TrialDraw:
    index: int
    seed: int
    kappa: tuple[float, float, float, float]  # mass, E, F, D
    position: tuple[float, float, float]
    heading: float

    def scenario(self, base: ScenarioConfig, variant: Variant) -> ScenarioConfig:
        k_m, k_e, k_f, k_d = self.kappa
        return base.replace(
            variant=variant,
            initial_mode="absolute",
            position_offset=self.position,
            heading=self.heading,
            estimate_scale=(k_m, k_d, k_e, k_f),
            seed=self.seed,
        )


def draw_trial(cfg: MonteCarloConfig, index: int) -> TrialDraw:
    """Sample trial ``index``; depends only on the master seed and the index."""
    ss = np.random.SeedSequence([cfg.master_seed, index])
    rng = np.random.default_rng(ss)
    kappa = 1.0 + rng.standard_normal(4) * np.asarray(cfg.sigma_kappa)
    position = rng.standard_normal(3) * cfg.sigma_pos
    heading = float(rng.standard_normal() * cfg.heading_std)
    noise_seed = int(ss.generate_state(1)[0])
    return TrialDraw(index, noise_seed, tuple(float(k) for k in kappa), tuple(float(p) for p in position), heading)


def _run_trial(args: tuple[MonteCarloConfig, int]) -> list[TrialResult]:
    cfg, index = args
    draw = draw_trial(cfg, index)
    out = []
    for v in cfg.variants:
        try:
            out.append(run_scenario(draw.scenario(cfg.base, v), kappa=draw.kappa))
        except Exception as exc:
            raise TrialFailure(index, v.value, exc) from exc
    return out


@dataclass
class ComponentStats:
    mean: float
    lower: float
    upper: float
    within_band: float  # fraction of trials inside [lower, upper]


@dataclass
class MonteCarloReport:
    config: MonteCarloConfig
    draws: list[TrialDraw]
    results: dict[str, list[TrialResult]]

    def values(self, variant: str, component: str) -> NDArray[np.float64]:
        return np.array([getattr(r, component) for r in self.results[variant]])

    def stats(self, variant: str, component: str) -> ComponentStats:
        x = self.values(variant, component)
        lo, hi = np.percentile(x, self.config.percentiles, method=PERCENTILE_METHOD)
        inside = float(np.mean((x >= lo) & (x <= hi)))
        return ComponentStats(float(np.mean(x)), float(lo), float(hi), inside)

    def aggregate_rows(self) -> list[dict]:
        rows = []
        for v in self.results:
            for c in COMPONENTS:
                s = self.stats(v, c)
                rows.append({
                    "variant": v,
                    "component": c,
                    "mean": s.mean,
                    "p_lower": s.lower,
                    "p_upper": s.upper,
                    "within_band": s.within_band,
                })
        return rows

    def rows(self) -> list[ResultRow]:
        out = []
        for v, results in self.results.items():
            for d, res in zip(self.draws, results):
                out.append(ResultRow("monte-carlo", {"trial": d.index, "variant": v, "heading": d.heading}, res))
        return out


def monte_carlo(cfg: MonteCarloConfig) -> MonteCarloReport:
    """Run every trial for every variant on identical draws.

    Trials may run in a process pool; results are ordered by trial index
    so the report does not depend on scheduling. The first failing trial
    aborts the batch.
    """
    jobs = [(cfg, i) for i in range(cfg.trials)]
    if cfg.workers == 1:
        per_trial = [_run_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(_run_trial, jobs))
    results = {v.value: [t[i] for t in per_trial] for i, v in enumerate(cfg.variants)}
    draws = [draw_trial(cfg, i) for i in range(cfg.trials)]
    return MonteCarloReport(cfg, draws, results)
