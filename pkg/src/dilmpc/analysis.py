"""Cost-controllability analysis: growth functions and boundedness checks.

The central object is the growth estimate

    B(t) = sup_x V_t(x) / l*(x)

over a compact sample set K away from the origin.  For costs generated by a
dilation structure the ratio is invariant along dilation orbits, so a
bounded estimate on an annulus certifies cost controllability on whole
sublevel sets; the geometric-series bound of :func:`check_bounded_extension`
then extends a finite-horizon table to all longer horizons.  When no finite
bound exists the ratio blows up as the samples approach the origin, which
:func:`estimate_growth` flags as an unbounded trend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .cost import StageCost
from .homogeneity import dilated_norm
from .ocp import OcpSpec, derive_seed, solve, value_function
from .systems import ControlSystem


@dataclass(frozen=True, eq=False)
class SetDescriptor:
    """Sample region for growth estimation.

    kind 'annulus':  params (c1, c2), the set {x : c1 <= N(x)**d <= c2}
    kind 'box':      params (w_1, ..., w_n), the cube |x_i| <= w_i with
                     draws of vanishing state cost rejected
    kind 'points':   params is an (k, n) array of explicit states
    """

    kind: str
    params: tuple | np.ndarray

    def __post_init__(self):
        if self.kind not in ("annulus", "box", "points"):
            raise ValueError(f"unknown set descriptor kind {self.kind!r}")
        if self.kind == "annulus":
            c1, c2 = (float(v) for v in self.params)
            if not 0.0 < c1 < c2:
                raise ValueError("annulus needs 0 < c1 < c2")

    def describe(self) -> str:
        if self.kind == "annulus":
            c1, c2 = self.params
            return f"annulus[{c1:g},{c2:g}]"
        if self.kind == "box":
            return "box[" + ",".join(f"{float(w):g}" for w in self.params) + "]"
        return f"points[{len(np.atleast_2d(self.params))}]"


def annulus(c1: float = 0.1, c2: float = 1.0) -> SetDescriptor:
    return SetDescriptor("annulus", (float(c1), float(c2)))


def box(widths) -> SetDescriptor:
    return SetDescriptor("box", tuple(float(w) for w in np.atleast_1d(widths)))


def points(states) -> SetDescriptor:
    return SetDescriptor("points", np.atleast_2d(np.asarray(states, dtype=float)))


def sample_states(region: SetDescriptor, sys: ControlSystem, cost: StageCost,
                  count: int, seed: int = 0,
                  ell_floor: float = 1e-9) -> np.ndarray:
    """Draw ``count`` states from the region, deterministically in ``seed``.

    Annulus and box draws come from a scrambled Sobol sequence; rejection
    keeps the accepted set of a smaller ``count`` a prefix of a larger one,
    so richer sampling only adds points.
    """
    if region.kind == "points":
        pts = np.atleast_2d(np.asarray(region.params, dtype=float))
        if pts.shape[1] != sys.n:
            raise ValueError("explicit points have the wrong dimension")
        return pts.copy()
    ds = cost.dilation if cost.dilation is not None else sys.declared_dilation
    if region.kind == "annulus" and ds is None:
        raise ValueError("annulus sampling requires a dilation structure")
    eng = qmc.Sobol(d=sys.n, scramble=True, seed=seed)
    out = []
    budget = 0
    while len(out) < count:
        draw = 2.0 * eng.random(max(count, 64)) - 1.0
        budget += len(draw)
        if budget > 1_000_000:
            raise RuntimeError("rejection sampling failed to fill the region")
        if region.kind == "annulus":
            c1, c2 = region.params
            cand = draw * c2 ** (ds.r / ds.d)
            nd = dilated_norm(ds, cand) ** ds.d
            keep = (nd >= c1) & (nd <= c2)
        else:
            widths = np.asarray(region.params, dtype=float)
            cand = draw * widths
            keep = np.array([cost.ell_star(x) >= ell_floor for x in cand])
        out.extend(cand[keep])
    return np.array(out[:count])


@dataclass(frozen=True, eq=False)
class GrowthTable:
    """Sampled growth function with per-point diagnostics.

    ``ratios[i, j]`` is V_{t_i}(x_j) / l*(x_j); ``b`` is the row maximum
    (the growth estimate), +inf when some value hit the escape sentinel.
    ``unbounded_trend`` is set when, at the largest horizon, the ratio grows
    as the sample cost l* shrinks — the signature of a ratio diverging
    toward the origin, i.e. of failing cost controllability on K.
    """

    t_grid: np.ndarray
    states: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    b: np.ndarray
    argmax_states: np.ndarray
    converged_fraction: np.ndarray
    region: str
    unbounded_trend: bool
    trend_slope: float
    seed: int

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = ",".join(["t", "b"] + [f"argmax_x{i+1}" for i in range(n)]
                          + ["converged_fraction"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for i in range(len(self.t_grid)):
                row = [self.t_grid[i], self.b[i], *self.argmax_states[i],
                       self.converged_fraction[i]]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def ratios_to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = ",".join(["t"] + [f"x{i+1}" for i in range(n)]
                          + ["value", "ratio"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for i in range(len(self.t_grid)):
                for j in range(len(self.states)):
                    row = [self.t_grid[i], *self.states[j],
                           self.values[i, j], self.ratios[i, j]]
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _trend(ratios_at_tmax, ell_values, threshold=-0.15, min_spread=3.0):
    # Slope of log(ratio) against log(l*): decisively negative means the
    # ratio keeps growing as the samples approach the origin.
    mask = np.isfinite(ratios_at_tmax) & (ratios_at_tmax > 0.0) & (ell_values > 0.0)
    if np.any(np.isinf(ratios_at_tmax)):
        return True, -math.inf
    if np.count_nonzero(mask) < 3:
        return False, 0.0
    ratio = ratios_at_tmax[mask]
    if np.max(ratio) < min_spread * np.min(ratio):
        return False, 0.0
    slope = float(np.polyfit(np.log(ell_values[mask]), np.log(ratio), 1)[0])
    return slope < threshold, slope


def estimate_growth(sys: ControlSystem, cost: StageCost, region: SetDescriptor,
                    t_grid, samples: int = 32, segments: int | None = None,
                    substeps: int = 5, restarts: int = 4, seed: int = 0,
                    max_iterations: int = 300,
                    gtol_rel: float = 1e-7) -> GrowthTable:
    """Tabulate B(t) = max over sampled x of V_t(x) / l*(x).

    Every (t, x) pair gets its own derived seed for the solver restarts, so
    the table is independent of evaluation order.  Solver non-convergence is
    reported per horizon through ``converged_fraction`` rather than hidden:
    a low fraction means the b-values are upper estimates of unclear quality.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or np.any(t_grid <= 0.0) \
            or np.any(np.diff(t_grid) <= 0.0):
        raise ValueError("t_grid must be positive and strictly increasing")
    t_max = float(t_grid[-1])
    if segments is None:
        segments = max(8, min(64, int(math.ceil(4.0 * t_max))))
    spec = OcpSpec(sys=sys, cost=cost, horizon=t_max, segments=segments,
                   substeps=substeps, gtol_rel=gtol_rel,
                   max_iterations=max_iterations)
    states = sample_states(region, sys, cost, samples, seed=seed)
    ells = np.array([cost.ell_star(x) for x in states])
    if np.any(ells <= 0.0):
        raise ValueError("sample set touches the zero set of the state cost")

    values = np.empty((len(t_grid), len(states)))
    conv = np.zeros(len(t_grid))
    for i, t in enumerate(t_grid):
        if t == spec.horizon:
            spec_t = spec
        else:
            nseg = max(1, int(math.ceil(segments * t / t_max - 1e-9)))
            spec_t = replace(spec, horizon=float(t), segments=nseg)
        for j, x in enumerate(states):
            sol = solve(spec_t, x, restarts=restarts,
                        seed=derive_seed(seed, i, j))
            values[i, j] = sol.objective
            conv[i] += 1.0 if sol.converged else 0.0
    conv /= len(states)

    ratios = values / ells
    b = np.max(ratios, axis=1)
    argmax = states[np.argmax(ratios, axis=1)]
    trend, slope = _trend(ratios[-1], ells)
    return GrowthTable(
        t_grid=t_grid.copy(), states=states, values=values, ratios=ratios,
        b=b, argmax_states=argmax, converged_fraction=conv,
        region=region.describe(), unbounded_trend=trend, trend_slope=slope,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class ExtensionBound:
    """Geometric extension of a finite growth table to all horizons.

    If every point of K can be driven into the alpha-dilated copy of its
    own sublevel set within t_star while paying at most b_star * l*, then
    chaining such moves multiplies costs by alpha**degree per round and

        sup_t B(t) <= b_star / (1 - alpha**degree).

    ``passed`` records whether the table's own empirical values at t >=
    t_star respect the bound.
    """

    bound: float
    alpha: float
    degree: float
    t_star: float
    b_star: float
    empirical_sup: float
    passed: bool


def check_bounded_extension(table: GrowthTable, degree: float,
                            alpha: float = 0.5,
                            t_star: float | None = None) -> ExtensionBound:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if t_star is None:
        t_star = float(table.t_grid[len(table.t_grid) // 2])
    idx = int(np.argmin(np.abs(table.t_grid - t_star)))
    t_star = float(table.t_grid[idx])
    b_star = float(table.b[idx])
    bound = b_star / (1.0 - alpha ** degree)
    tail = table.b[idx:]
    emp = float(np.max(tail))
    return ExtensionBound(bound=bound, alpha=alpha, degree=float(degree),
                          t_star=t_star, b_star=b_star, empirical_sup=emp,
                          passed=bool(emp <= bound))


@dataclass(frozen=True, eq=False)
class AveragedCostReport:
    """Check of the sufficient condition V_t(x) < t * l*(x).

    A system that cannot reach the origin in finite time can still admit a
    bounded growth function; this ratio test (strictly below 1 on a grid of
    horizons and states) is the certificate used by the scalar example with
    drift -|x|(x+u).
    """

    max_ratio: float
    t_grid: np.ndarray
    states: np.ndarray
    ratios: np.ndarray
    passed: bool

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = ",".join(["t"] + [f"x{i+1}" for i in range(n)] + ["ratio"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for i in range(len(self.t_grid)):
                for j in range(len(self.states)):
                    row = [self.t_grid[i], *self.states[j], self.ratios[i, j]]
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def check_averaged_cost_condition(sys: ControlSystem, cost: StageCost, t_grid,
                            states, segments_per_unit: float = 8.0,
                            substeps: int = 5, restarts: int = 2,
                            seed: int = 0) -> AveragedCostReport:
    """Evaluate max over the grid of V_t(x) / (t * l*(x))."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if np.any(t_grid <= 0.0):
        raise ValueError("horizons must be positive")
    ratios = np.empty((len(t_grid), len(states)))
    for i, t in enumerate(t_grid):
        segments = max(1, int(math.ceil(segments_per_unit * t)))
        spec = OcpSpec(sys=sys, cost=cost, horizon=float(t), segments=segments,
                       substeps=substeps)
        for j, x in enumerate(states):
            ell = cost.ell_star(x)
            if ell <= 0.0:
                raise ValueError("states must have positive stage cost")
            v = value_function(spec, x, restarts=restarts,
                               seed=derive_seed(seed, i, j))
            ratios[i, j] = v / (t * ell)
    max_ratio = float(np.max(ratios))
    return AveragedCostReport(max_ratio=max_ratio, t_grid=t_grid.copy(),
                         states=states.copy(), ratios=ratios,
                         passed=bool(max_ratio < 1.0))
