"""Receding-horizon control without terminal ingredients.

Each step measures the state, solves the finite-horizon problem of
:mod:`dilmpc.ocp`, applies the first ``delta`` seconds of the minimiser to
the plant (integrated on a refined grid), and shifts.  The loop classifies
its outcome as one of

    converged     the chosen metric dropped below ``convergence_radius``
    stalled       the state never moved (within ``stall_tolerance``) over a
                  full run of at least ``min_stall_steps`` steps
    diverged      a plant or predicted trajectory escaped the guard box
    inconclusive  anything else (ran out of steps while still moving)

``stalled`` is the interesting failure mode here: with a quadratic stage
cost on the driftless benchmark the open-loop minimiser from certain states
is exactly u = 0, so the closed loop provably never moves, while the
dilated-norm cost from the same states steers to the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cost import StageCost
from .homogeneity import dilated_norm
from .ocp import OcpSpec, derive_seed, solve
from .systems import ControlSystem, GUARD_DEFAULT, rollout_segments

WARM_STARTS = ("shift_and_hold", "zero", "previous")
METRICS = ("euclidean", "dilated")
VERDICTS = ("converged", "stalled", "diverged", "inconclusive")


@dataclass(frozen=True, eq=False)
class MpcConfig:
    """Closed-loop settings; ``delta`` must be a multiple of horizon/segments."""

    horizon: float
    delta: float
    steps: int
    segments: int
    substeps: int = 5
    restarts: int = 8
    warm_start: str = "shift_and_hold"
    convergence_radius: float = 1e-2
    stall_tolerance: float = 1e-6
    metric: str = "euclidean"
    min_stall_steps: int = 20
    plant_refine: int = 4
    max_iterations: int = 300
    gtol_rel: float = 1e-7
    guard: float = GUARD_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0.0 or self.delta <= 0.0:
            raise ValueError("horizon and delta must be positive")
        if self.delta > self.horizon:
            raise ValueError("delta cannot exceed the horizon")
        if self.steps < 1 or self.segments < 1:
            raise ValueError("steps and segments must be at least 1")
        if self.warm_start not in WARM_STARTS:
            raise ValueError(f"warm_start must be one of {WARM_STARTS}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        seg_len = self.horizon / self.segments
        if abs(round(self.delta / seg_len) * seg_len - self.delta) \
                > 1e-9 * self.horizon:
            raise ValueError(
                "delta must be an integer multiple of horizon/segments so the "
                "applied prefix aligns with the control grid")

    @property
    def shift(self) -> int:
        return int(round(self.delta / (self.horizon / self.segments)))


@dataclass(frozen=True, eq=False)
class ClosedLoopResult:
    """Executed closed loop: states at the sampling instants plus diagnostics."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray          # first applied control value per step
    applied: np.ndarray           # (steps, shift, m) applied segment values
    objectives: np.ndarray        # V_T at each visited state
    metric_values: np.ndarray
    verdict: str
    violations: int               # count of V_T increases along the run
    worst_violation: float
    solver_converged: np.ndarray
    solver_iterations: np.ndarray
    config: MpcConfig

    @property
    def steps_executed(self) -> int:
        return len(self.objectives)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        m = self.controls.shape[1] if self.controls.size else self.config.shift
        header = ",".join(["step", "t"] + [f"x{i+1}" for i in range(n)]
                          + [f"u{i+1}" for i in range(m)]
                          + ["objective", "metric", "verdict"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for j in range(len(self.times)):
                row = [f"{j:d}", f"{self.times[j]:.17g}"]
                row += [f"{v:.17g}" for v in self.states[j]]
                if j < self.steps_executed:
                    row += [f"{v:.17g}" for v in self.controls[j]]
                    row.append(f"{self.objectives[j]:.17g}")
                else:
                    row += [""] * m + [""]
                row.append(f"{self.metric_values[j]:.17g}")
                row.append(self.verdict if j == len(self.times) - 1 else "running")
                fh.write(",".join(row) + "\n")


def _metric_fn(cfg: MpcConfig, sys: ControlSystem, cost: StageCost):
    if cfg.metric == "euclidean":
        return lambda x: float(np.linalg.norm(x))
    ds = cost.dilation if cost.dilation is not None else sys.declared_dilation
    if ds is None:
        raise ValueError("dilated metric requires a dilation structure")
    return lambda x: float(dilated_norm(ds, x))


def run_closed_loop(sys: ControlSystem, cost: StageCost, cfg: MpcConfig,
                    x0) -> ClosedLoopResult:
    """Run the receding-horizon loop from ``x0`` and classify the outcome."""
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},)")
    metric = _metric_fn(cfg, sys, cost)
    spec = OcpSpec(sys=sys, cost=cost, horizon=cfg.horizon,
                   segments=cfg.segments, substeps=cfg.substeps,
                   gtol_rel=cfg.gtol_rel, max_iterations=cfg.max_iterations,
                   guard=cfg.guard)
    shift = cfg.shift
    plant_substeps = np.full(shift, cfg.substeps * cfg.plant_refine,
                             dtype=np.int32)

    states = [x.copy()]
    times = [0.0]
    metrics = [metric(x)]
    objectives: list[float] = []
    controls: list[np.ndarray] = []
    applied: list[np.ndarray] = []
    sol_conv: list[bool] = []
    sol_iters: list[int] = []
    violations = 0
    worst = 0.0
    verdict = None
    z_init = np.zeros((cfg.segments, sys.m))

    for k in range(cfg.steps):
        if metrics[-1] <= cfg.convergence_radius:
            verdict = "converged"
            break
        sol = solve(spec, x, init=z_init, restarts=cfg.restarts,
                    seed=derive_seed(cfg.seed, k))
        if not math.isfinite(sol.objective):
            verdict = "diverged"
            break
        objectives.append(sol.objective)
        sol_conv.append(sol.converged)
        sol_iters.append(sol.iterations)
        if len(objectives) >= 2 and objectives[-1] > objectives[-2]:
            violations += 1
            worst = max(worst, objectives[-1] - objectives[-2])

        seg_u = sol.u_star.values[:shift]
        esc, x_next, _ = rollout_segments(
            sys, x, spec.grid[: shift + 1], seg_u, plant_substeps,
            guard=cfg.guard, record=False)
        controls.append(seg_u[0].copy())
        applied.append(seg_u.copy())
        if esc:
            verdict = "diverged"
            break
        x = x_next
        states.append(x.copy())
        times.append((k + 1) * cfg.delta)
        metrics.append(metric(x))

        if cfg.warm_start == "shift_and_hold":
            z_init = np.vstack([sol.u_star.values[shift:],
                                np.tile(sol.u_star.values[-1], (shift, 1))])
        elif cfg.warm_start == "previous":
            z_init = sol.u_star.values.copy()
        else:
            z_init = np.zeros((cfg.segments, sys.m))

    if verdict is None:
        if metrics[-1] <= cfg.convergence_radius:
            verdict = "converged"
        elif len(objectives) >= cfg.min_stall_steps and np.max(
                np.linalg.norm(np.array(states) - states[0], axis=1)) \
                <= cfg.stall_tolerance:
            verdict = "stalled"
        else:
            verdict = "inconclusive"

    m = sys.m
    return ClosedLoopResult(
        times=np.array(times),
        states=np.array(states),
        controls=np.array(controls).reshape(len(controls), m),
        applied=np.array(applied).reshape(len(applied), shift, m),
        objectives=np.array(objectives),
        metric_values=np.array(metrics),
        verdict=verdict,
        violations=violations,
        worst_violation=worst,
        solver_converged=np.array(sol_conv, dtype=bool),
        solver_iterations=np.array(sol_iters, dtype=int),
        config=cfg,
    )


def horizon_sweep(sys: ControlSystem, cost: StageCost, cfg: MpcConfig, x0,
                  horizons: Sequence[float]):
    """Re-run the closed loop over a list of horizons.

    Segment counts are scaled proportionally so the segment length (and the
    delta-alignment) is preserved.  Returns [(horizon, result), ...] in the
    given order.
    """
    out = []
    for T in horizons:
        segments = max(1, int(round(cfg.segments * T / cfg.horizon)))
        cfg_T = replace(cfg, horizon=float(T), segments=segments)
        out.append((float(T), run_closed_loop(sys, cost, cfg_T, x0)))
    return out


def smallest_stabilizing_horizon(sweep) -> float | None:
    """First horizon in a sweep whose closed loop converged, if any."""
    for T, result in sweep:
        if result.verdict == "converged":
            return T
    return None
