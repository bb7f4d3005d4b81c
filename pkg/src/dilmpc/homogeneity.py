"""Dilation structures and homogeneity checks.

A dilation structure collects the state weights r, control weights s, the
degree tau of the vector field, and the norm degree d.  The family of maps

    Lambda_alpha x = (alpha**r_1 x_1, ..., alpha**r_n x_n)
    Delta_alpha  u = (alpha**s_1 u_1, ..., alpha**s_m u_m)

scales states and controls anisotropically; a vector field f is homogeneous
of degree tau w.r.t. (r, s) when f(Lambda_a x, Delta_a u) = a**tau Lambda_a
f(x, u) for all a > 0.  The induced dilated norm

    N(x) = (sum_i |x_i| ** (d / r_i)) ** (1 / d)

satisfies N(Lambda_a x) = a N(x) and is the building block for the stage
costs in :mod:`dilmpc.cost`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc


def default_alpha_grid() -> np.ndarray:
    """Log-spaced scale factors 2**-10 ... 1, 16 points."""
    return np.logspace(-10.0, 0.0, 16, base=2.0)


@dataclass(frozen=True, eq=False)
class DilationStructure:
    """Weights (r, s), vector-field degree tau and norm degree d.

    d defaults to the canonical choice 2 * prod(r); any positive override is
    accepted as long as every induced exponent d / r_i and d / s_j stays at
    or above 1, which keeps the stage-cost integrands locally Lipschitz away
    from the origin and the norm well defined.
    """

    r: np.ndarray
    s: np.ndarray
    tau: float
    d: float | None = None

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if r.ndim != 1 or s.ndim != 1:
            raise ValueError("r and s must be one-dimensional")
        if not (np.all(r > 0.0) and np.all(s > 0.0)):
            raise ValueError("dilation weights must be positive")
        tau = float(self.tau)
        if not tau > -np.min(r):
            raise ValueError(
                f"tau={tau} is not admissible: need tau > -min(r) = {-np.min(r)}")
        d = 2.0 * float(np.prod(r)) if self.d is None else float(self.d)
        if not d > 0.0:
            raise ValueError("norm degree d must be positive")
        if np.any(d / r < 1.0) or np.any(d / s < 1.0):
            raise ValueError(
                f"degree d={d} induces exponents below 1 (d/r={d / r}, d/s={d / s})")
        r.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def m(self) -> int:
        return self.s.size

    @property
    def state_exponents(self) -> np.ndarray:
        return self.d / self.r

    @property
    def control_exponents(self) -> np.ndarray:
        return self.d / self.s


def dilate_state(ds: DilationStructure, alpha: float, x) -> np.ndarray:
    """Apply Lambda_alpha to a state (or batch of states, last axis = n)."""
    if alpha < 0.0:
        raise ValueError("dilation parameter must be nonnegative")
    return np.asarray(x, dtype=float) * alpha ** ds.r


def dilate_control(ds: DilationStructure, alpha: float, u) -> np.ndarray:
    """Apply Delta_alpha to a control (or batch, last axis = m)."""
    if alpha < 0.0:
        raise ValueError("dilation parameter must be nonnegative")
    return np.asarray(u, dtype=float) * alpha ** ds.s


def dilated_norm(ds: DilationStructure, x) -> float | np.ndarray:
    """N(x) = (sum |x_i|**(d/r_i))**(1/d); broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    acc = np.sum(np.abs(x) ** (ds.d / ds.r), axis=-1)
    return acc ** (1.0 / ds.d)


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Deterministic sample layout shared by the pointwise checks.

    States and controls are drawn jointly from a scrambled Sobol sequence in
    the cube [-box, box]**(n+m); the scale factors come from ``alpha_grid``.
    """

    alpha_grid: np.ndarray = field(default_factory=default_alpha_grid)
    points: int = 256
    box: float = 1.0
    seed: int = 0

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.alpha_grid, dtype=float))
        if grid.size == 0 or np.any(grid <= 0.0):
            raise ValueError("alpha_grid must be non-empty and positive")
        grid.setflags(write=False)
        object.__setattr__(self, "alpha_grid", grid)
        if self.points < 1:
            raise ValueError("need at least one sample point")
        if self.box <= 0.0:
            raise ValueError("box half-width must be positive")

    def draw(self, dim: int, count: int | None = None) -> np.ndarray:
        """Sobol points in [-box, box]**dim, deterministic in the seed."""
        count = self.points if count is None else count
        eng = qmc.Sobol(d=dim, scramble=True, seed=self.seed)
        return (2.0 * eng.random(count) - 1.0) * self.box


@dataclass(frozen=True, eq=False)
class HomogeneityReport:
    passed: bool
    max_residual: float
    tol: float
    worst_alpha: float
    worst_x: np.ndarray
    worst_u: np.ndarray
    samples: int


def check_homogeneity(sys, ds: DilationStructure, plan: SamplingPlan | None = None,
                      tol: float = 1e-9) -> HomogeneityReport:
    """Sample-test f(Lambda_a x, Delta_a u) == a**tau Lambda_a f(x, u).

    The identity is algebraic, so the default tolerance is tight; genuine
    homogeneity fails only by rounding, while a structurally inhomogeneous
    field (e.g. the full unicycle) fails by orders of magnitude.
    """
    if plan is None:
        plan = SamplingPlan()
    if ds.n != sys.n or ds.m != sys.m:
        raise ValueError("dilation structure does not match system dimensions")
    pts = plan.draw(sys.n + sys.m)
    xs, us = pts[:, :sys.n], pts[:, sys.n:]

    worst = (-1.0, 0.0, xs[0], us[0])
    for alpha in plan.alpha_grid:
        lam = alpha ** ds.r
        delta = alpha ** ds.s
        scale = alpha ** ds.tau
        for x, u in zip(xs, us):
            lhs = sys.rhs(lam * x, delta * u)
            rhs = scale * lam * sys.rhs(x, u)
            res = float(np.max(np.abs(lhs - rhs)))
            if res > worst[0]:
                worst = (res, float(alpha), x, u)
    return HomogeneityReport(
        passed=worst[0] <= tol,
        max_residual=worst[0],
        tol=tol,
        worst_alpha=worst[1],
        worst_x=worst[2].copy(),
        worst_u=worst[3].copy(),
        samples=len(xs),
    )


@dataclass(frozen=True, eq=False)
class TrajectoryIdentityReport:
    passed: bool
    max_deviation: float
    tol: float
    alpha: float
    escaped: bool


def check_trajectory_identity(sys, ds: DilationStructure, x0, u, alpha: float,
                              horizon: float, steps: int = 256,
                              tol: float = 1e-6) -> TrajectoryIdentityReport:
    """Integrated counterpart of :func:`check_homogeneity`.

    Compares the flow from the dilated initial state Lambda_alpha x0 under
    the dilated, time-reparameterised control t -> Delta_alpha u(alpha**tau
    t) on [0, horizon] against the dilated image of the flow from x0 under u
    on [0, alpha**tau * horizon].  Both sides run on matched RK4 grids so
    the deviation measures the homogeneity defect, not integrator error.
    """
    from . import systems  # local import to avoid a module cycle

    if alpha <= 0.0:
        raise ValueError("alpha must be positive for the trajectory identity")
    scale = alpha ** ds.tau
    # Right side: original control on the reparameterised horizon.
    seg_t_r, seg_u_r = systems.signal_segments(u, scale * horizon)
    lens = np.diff(seg_t_r)
    substeps = np.maximum(1, np.ceil(
        lens / (scale * horizon / steps) - 1e-12).astype(np.int32))
    esc_r, t_r, x_r, _ = systems.rollout_segments(
        sys, np.asarray(x0, float), seg_t_r, seg_u_r, substeps)
    # Left side: dilated control, time axis divided by alpha**tau.
    seg_t_l = seg_t_r / scale
    seg_u_l = seg_u_r * alpha ** ds.s
    esc_l, t_l, x_l, _ = systems.rollout_segments(
        sys, dilate_state(ds, alpha, x0), seg_t_l, seg_u_l, substeps)

    escaped = bool(esc_r or esc_l)
    k = min(len(t_r), len(t_l))
    dev = float(np.max(np.abs(x_l[:k] - x_r[:k] * alpha ** ds.r))) if k else np.inf
    return TrajectoryIdentityReport(
        passed=(not escaped) and dev <= tol,
        max_deviation=dev,
        tol=tol,
        alpha=float(alpha),
        escaped=escaped,
    )


@dataclass(frozen=True, eq=False)
class ApproximationCertificate:
    """Fitted constants for a local homogeneous approximation.

    ``M`` is the smallest constant such that the sampled residuals satisfy
    |f_i - h_i|(Lambda_a x, Delta_a u) <= M a**(r_i + tau + eta) over the
    ball ||x||, ||u|| <= rho (Euclidean) and the sampled scales; ``margins``
    is M minus the per-component fit, so a zero margin marks the component
    that decides the constant and a margin equal to M marks an exactly
    homogeneous component.  ``verified`` is cleared when the residual ratios
    grow as alpha -> 0, the signature of an inadmissible eta.
    """

    rho: float
    eta: float
    M: float
    component_max: np.ndarray
    margins: np.ndarray
    verified: bool
    diverging: bool
    norm: str
    samples: int
    alpha_grid: np.ndarray


def check_approximation(full, approx, ds: DilationStructure, rho: float,
                        eta: float, plan: SamplingPlan | None = None,
                        trend_slope_tol: float = -0.05) -> ApproximationCertificate:
    """Fit the residual bound of a homogeneous approximation on a ball.

    Draws (x, u) pairs with Euclidean norms at most rho, evaluates the
    residual R = full.rhs - approx.rhs along dilated arguments for every
    alpha in the plan (alphas must lie in (0, 1]), and maximises
    |R_i| / alpha**(r_i + tau + eta).  A log-log fit over the small-alpha
    half of the grid detects ratios that diverge as alpha -> 0, in which
    case no finite M exists and ``verified`` is False.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    if plan is None:
        plan = SamplingPlan()
    alphas = plan.alpha_grid
    if np.any(alphas > 1.0):
        raise ValueError("approximation certificates require alpha in (0, 1]")
    if full.n != approx.n or full.m != approx.m:
        raise ValueError("systems must share state and control dimensions")
    n, m = full.n, full.m

    raw = plan.draw(n + m) / plan.box * rho
    keep = (np.linalg.norm(raw[:, :n], axis=1) <= rho) \
        & (np.linalg.norm(raw[:, n:], axis=1) <= rho)
    pts = raw[keep]
    if len(pts) == 0:
        raise ValueError("no sample survived the ball rejection step")

    comp_max = np.zeros(n)
    per_alpha = np.zeros(len(alphas))
    for a_idx, alpha in enumerate(alphas):
        lam = alpha ** ds.r
        delta = alpha ** ds.s
        denom = alpha ** (ds.r + ds.tau + eta)
        worst = 0.0
        for row in pts:
            x, u = lam * row[:n], delta * row[n:]
            resid = np.abs(full.rhs(x, u) - approx.rhs(x, u)) / denom
            np.maximum(comp_max, resid, out=comp_max)
            worst = max(worst, float(np.max(resid)))
        per_alpha[a_idx] = worst

    M = float(np.max(comp_max))
    diverging = False
    if M > 0.0:
        order = np.argsort(alphas)
        small = order[: max(3, len(order) // 2)]
        mask = per_alpha[small] > 0.0
        if np.count_nonzero(mask) >= 3:
            slope = np.polyfit(np.log(alphas[small][mask]),
                               np.log(per_alpha[small][mask]), 1)[0]
            diverging = bool(slope < trend_slope_tol)
    return ApproximationCertificate(
        rho=float(rho),
        eta=float(eta),
        M=M,
        component_max=comp_max,
        margins=M - comp_max,
        verified=not diverging,
        diverging=diverging,
        norm="euclidean",
        samples=len(pts),
        alpha_grid=alphas.copy(),
    )
