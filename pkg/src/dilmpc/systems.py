"""Control systems, piecewise-constant signals and fixed-step integration.

All built-in systems carry an integer kernel id so rollouts can run inside
the compiled backend; systems constructed from an arbitrary ``rhs`` callable
take the generic Python path instead, with identical stepping semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .homogeneity import DilationStructure

GUARD_DEFAULT = 1e8

BUILTIN_NAMES = ("linear", "driftless3", "scalar_power", "robot",
                 "robot_approx", "damped1d")


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """Finite-dimensional control system x' = f(x, u) with f(0, 0) = 0."""

    n: int
    m: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = "custom"
    declared_dilation: DilationStructure | None = None
    params: dict = field(default_factory=dict)
    freeze_origin: bool = False
    kernel_id: int | None = None
    kernel_params: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one state and one control")
        f0 = np.asarray(self.rhs(np.zeros(self.n), np.zeros(self.m)), dtype=float)
        if f0.shape != (self.n,):
            raise ValueError(f"rhs must return shape ({self.n},), got {f0.shape}")
        if np.max(np.abs(f0)) > 1e-12:
            raise ValueError("the origin must be an equilibrium: f(0,0) != 0")


def builtin(name: str, **params) -> ControlSystem:
    """Construct one of the named systems used throughout the package.

    ``linear``        x' = A x + B u              (params A, B)
    ``driftless3``    x' = (u1, x3 u1, u2)
    ``scalar_power``  x' = |x|**k sign(x) + u     (param k > 0)
    ``robot``         x' = (cos(x3) u1, sin(x3) u1, u2)
    ``robot_approx``  the driftless3 field, shipped as the local homogeneous
                      approximation of ``robot`` around the origin
    ``damped1d``      x' = -|x| (x + u)

    Every system except ``robot`` declares the dilation structure that makes
    its field homogeneous; ``robot`` is only approximately homogeneous and
    declares none.
    """
    if name == "driftless3" or name == "robot_approx":
        ds = DilationStructure(r=np.array([1.0, 2.0, 1.0]),
                               s=np.array([1.0, 1.0]), tau=0.0)
        return ControlSystem(
            n=3, m=2, label=name,
            rhs=lambda x, u: np.array([u[0], x[2] * u[0], u[1]]),
            declared_dilation=ds,
            kernel_id=_backend.SYS_DRIFTLESS3 if name == "driftless3"
            else _backend.SYS_ROBOT_APPROX,
        )
    if name == "robot":
        return ControlSystem(
            n=3, m=2, label=name,
            rhs=lambda x, u: np.array(
                [math.cos(x[2]) * u[0], math.sin(x[2]) * u[0], u[1]]),
            kernel_id=_backend.SYS_ROBOT,
        )
    if name == "scalar_power":
        k = float(params.get("k", 1.0))
        if k <= 0.0:
            raise ValueError("scalar_power needs k > 0")
        r = 1.0 / k
        # Canonical degree 2*prod(r) = 2/k; for k > 2 that drops the control
        # exponent below 1, so fall back to the smallest admissible degree.
        d = max(2.0 / k, 1.0)
        ds = DilationStructure(r=np.array([r]), s=np.array([1.0]),
                               tau=1.0 - r, d=d)

        def rhs(x, u, _k=k):
            return np.array([math.pow(abs(x[0]), _k) * math.copysign(1.0, x[0])
                             if x[0] != 0.0 else 0.0]) + u[:1]

        return ControlSystem(
            n=1, m=1, label=name, rhs=rhs, declared_dilation=ds,
            params={"k": k}, freeze_origin=k < 1.0,
            kernel_id=_backend.SYS_SCALAR_POWER, kernel_params=np.array([k]),
        )
    if name == "damped1d":
        ds = DilationStructure(r=np.array([1.0]), s=np.array([1.0]), tau=1.0)
        return ControlSystem(
            n=1, m=1, label=name,
            rhs=lambda x, u: np.array([-abs(x[0]) * (x[0] + u[0])]),
            declared_dilation=ds, kernel_id=_backend.SYS_DAMPED1D,
        )
    if name == "linear":
        A = np.atleast_2d(np.asarray(params["A"], dtype=float))
        B = np.atleast_2d(np.asarray(params["B"], dtype=float))
        n, m = B.shape
        if A.shape != (n, n):
            raise ValueError(f"A must be {n}x{n} to match B {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("A and B must be finite")
        ds = DilationStructure(r=np.ones(n), s=np.ones(m), tau=0.0)
        return ControlSystem(
            n=n, m=m, label=name,
            rhs=lambda x, u: A @ x + B @ u,
            declared_dilation=ds, params={"A": A, "B": B},
            kernel_id=_backend.SYS_LINEAR,
            kernel_params=np.concatenate([A.ravel(), B.ravel()]),
        )
    raise ValueError(f"unknown system {name!r}; known: {BUILTIN_NAMES}")


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant control: values[j] applies on [grid[j], grid[j+1])."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if grid.ndim != 1 or len(grid) != len(values) + 1:
            raise ValueError("grid must hold one more breakpoint than value rows")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(values)):
            raise ValueError("signal must be finite")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def value_at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.grid, t, side="right")) - 1
        j = min(max(j, 0), len(self.values) - 1)
        return self.values[j]

    @staticmethod
    def constant(u, horizon: float, segments: int = 1) -> "ControlSignal":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return ControlSignal(np.linspace(0.0, horizon, segments + 1),
                             np.tile(u, (segments, 1)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled state trajectory with the running cost integral."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray
    escaped: bool = False

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def total_cost(self) -> float:
        return float(self.running_cost[-1])

    def to_csv(self, path) -> None:
        n, m = self.states.shape[1], self.controls.shape[1]
        header = ",".join(["t"] + [f"x{i+1}" for i in range(n)]
                          + [f"u{i+1}" for i in range(m)] + ["cost"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for j in range(len(self.times)):
                row = [self.times[j], *self.states[j], *self.controls[j],
                       self.running_cost[j]]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def signal_segments(u: ControlSignal, horizon: float):
    """Clip a signal to [0, horizon] and return (breakpoints, value rows)."""
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    g = u.grid
    if g[0] != 0.0:
        raise ValueError("control signals must start at t = 0")
    if g[-1] < horizon - 1e-9 * max(1.0, horizon):
        raise ValueError("control signal does not cover the horizon")
    keep = g < horizon - 1e-12 * max(1.0, horizon)
    seg_t = np.append(g[keep], horizon)
    return seg_t, np.array(u.values[: len(seg_t) - 1])


def _rollout_generic(sys, cost, x0, seg_t, seg_u, substeps, guard, record):
    # Same stepping semantics as the backends, for systems without kernel ids.
    f = sys.rhs
    ell = (lambda x, u: 0.0) if cost is None else cost.evaluate
    x = np.asarray(x0, dtype=float).copy()
    n = sys.n
    nodes = [(seg_t[0], x.copy(), 0.0)] if record else None
    J = 0.0
    escaped = False
    for j in range(len(seg_t) - 1):
        if escaped:
            break
        u = seg_u[j]
        base = seg_t[j]
        nsub = int(substeps[j])
        h = (seg_t[j + 1] - base) / nsub
        uzero = not np.any(u != 0.0)
        for step in range(nsub):
            if sys.freeze_origin and uzero and np.max(np.abs(x)) < 1e-12:
                x = np.zeros(n)
            k1 = f(x, u)
            c1 = ell(x, u)
            xt = x + 0.5 * h * k1
            k2 = f(xt, u)
            c2 = ell(xt, u)
            xt = x + 0.5 * h * k2
            k3 = f(xt, u)
            c3 = ell(xt, u)
            xt = x + h * k3
            k4 = f(xt, u)
            c4 = ell(xt, u)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            J = J + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            if not (math.isfinite(J) and np.all(np.isfinite(x))
                    and np.max(np.abs(x)) <= guard):
                escaped = True
                break
            if record:
                nodes.append((base + (step + 1) * h, x.copy(), J))
    if record:
        times = np.array([t for t, _, _ in nodes])
        states = np.array([s for _, s, _ in nodes])
        cum = np.array([c for _, _, c in nodes])
        return escaped, times, states, cum
    return escaped, x, J


def rollout_segments(sys: ControlSystem, x0, seg_t, seg_u, substeps,
                     cost=None, guard: float = GUARD_DEFAULT, record: bool = True):
    """Low-level rollout on an explicit segmentation.

    Dispatches to the compiled kernel when both the system and the cost have
    kernel encodings.  Returns ``(escaped, times, states, cum)`` when
    recording, else ``(escaped, x_final, total_cost)``.
    """
    seg_t = np.ascontiguousarray(seg_t, dtype=float)
    seg_u = np.ascontiguousarray(np.atleast_2d(seg_u), dtype=float)
    substeps = np.ascontiguousarray(substeps, dtype=np.int32)
    if np.any(substeps < 1):
        raise ValueError("substep counts must be >= 1")
    if cost is None:
        enc = (_backend.COST_NONE, np.empty(0))
    else:
        enc = cost.kernel_encoding()
    if sys.kernel_id is not None and enc is not None:
        return _backend.rollout(
            sys.kernel_id, np.ascontiguousarray(sys.kernel_params, dtype=float),
            sys.n, sys.m, np.ascontiguousarray(x0, dtype=float),
            seg_t, seg_u, substeps, enc[0],
            np.ascontiguousarray(enc[1], dtype=float),
            guard, sys.freeze_origin, record)
    return _rollout_generic(sys, cost, x0, seg_t, seg_u, substeps, guard, record)


def _node_controls(seg_u, substeps, count):
    # Control value attached to each recorded node (segment value; the final
    # node repeats the last segment).  ``count`` trims escaped rollouts.
    rows = np.repeat(seg_u, substeps, axis=0)
    rows = np.vstack([rows, seg_u[-1]])
    return rows[:count]


def integrate(sys: ControlSystem, x0, u: ControlSignal, horizon: float,
              step: float = 0.01, cost=None,
              guard: float = GUARD_DEFAULT) -> Trajectory:
    """Integrate x' = f(x, u(t)) on [0, horizon] with fixed-step RK4.

    Steps are aligned to the control breakpoints: each segment is cut into
    ceil(length / step) equal RK4 steps, so piecewise-constant controls are
    represented exactly and refining ``step`` refines every segment.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    seg_t, seg_u = signal_segments(u, horizon)
    substeps = np.maximum(
        1, np.ceil((np.diff(seg_t) / step) - 1e-12).astype(np.int32))
    escaped, times, states, cum = rollout_segments(
        sys, x0, seg_t, seg_u, substeps, cost=cost, guard=guard, record=True)
    return Trajectory(times=times, states=states,
                      controls=_node_controls(seg_u, substeps, len(times)),
                      running_cost=cum, escaped=escaped)


def steer_driftless_to_origin(x0, stage_duration: float = 1.0) -> ControlSignal:
    """Four-stage piecewise-constant control steering driftless3 to 0.

    Stage 1 lifts x3 to 1 when it is too small to divide by (|x3| < 0.1)
    while x2 still needs correcting; stage 2 zeroes x2 through the x3 u1
    channel; stage 3 retires x3; stage 4 retires x1.  Each stage applies the
    constant control that finishes its job in exactly ``stage_duration``,
    and later stages keep the already-cleared components invariant, so the
    composition reaches the origin up to rounding.
    """
    if stage_duration <= 0.0:
        raise ValueError("stage_duration must be positive")
    x1, x2, x3 = (float(v) for v in np.asarray(x0, dtype=float))
    dt = float(stage_duration)
    values = np.zeros((4, 2))
    x3p = x3
    if abs(x3) < 0.1 and x2 != 0.0:
        values[0, 1] = (1.0 - x3) / dt
        x3p = 1.0
    if x2 != 0.0:
        values[1, 0] = -x2 / (x3p * dt)
    x1p = x1 + values[1, 0] * dt
    values[2, 1] = -x3p / dt
    values[3, 0] = -x1p / dt
    grid = dt * np.arange(5.0)
    return ControlSignal(grid=grid, values=values)
