"""Stage costs compatible with a dilation structure.

The central construction takes a dilation structure (r, s, tau, d) and forms

    l(x, u) = sum_i qx_i |x_i|**(d/r_i) + sum_j qu_j |u_j|**(d/s_j)

which scales like l(Lambda_a x, Delta_a u) = a**d l(x, u).  Along a dilated
trajectory the running cost therefore scales by a**(d - tau) once the time
axis is reparameterised, which is what :func:`check_cost_homogeneity`
verifies.  A conventional quadratic cost is provided for comparison; it is
the special case r = s = 1, d = 2 and scales correctly only there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .homogeneity import DilationStructure

KINDS = ("homogeneous", "weighted_homogeneous", "quadratic")


@dataclass(frozen=True, eq=False)
class StageCost:
    """Running cost l(x, u) >= 0 with l(0, 0) = 0.

    ``degree`` is the homogeneity degree of the map (x, u) -> l(x, u) under
    the generating dilation (2 for quadratic costs under the trivial
    dilation).  Power-type costs store per-channel weights and exponents;
    quadratic costs store the matrices.
    """

    kind: str
    n: int
    m: int
    degree: float
    dilation: DilationStructure | None = None
    qx: np.ndarray | None = None
    ex: np.ndarray | None = None
    qu: np.ndarray | None = None
    eu: np.ndarray | None = None
    Q: np.ndarray | None = None
    R: np.ndarray | None = None

    def evaluate(self, x, u) -> float:
        """Stage cost at a single (x, u) pair."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.kind == "quadratic":
            return float(x @ self.Q @ x + u @ self.R @ u)
        return float(np.sum(self.qx * np.abs(x) ** self.ex)
                     + np.sum(self.qu * np.abs(u) ** self.eu))

    def ell_star(self, x) -> float:
        """State-only part min_u l(x, u), attained at u = 0."""
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return float(x @ self.Q @ x)
        return float(np.sum(self.qx * np.abs(x) ** self.ex))

    def kernel_encoding(self):
        """(cost_id, flat parameter vector) for the rollout backends."""
        if self.kind == "quadratic":
            return _backend.COST_QUADRATIC, np.concatenate(
                [self.Q.ravel(), self.R.ravel()])
        return _backend.COST_POWER, np.concatenate(
            [self.qx, self.ex, self.qu, self.eu])


def _power_cost(kind, ds, qx, qu, degree):
    qx = np.asarray(qx, dtype=float)
    qu = np.asarray(qu, dtype=float)
    if qx.shape != (ds.n,) or qu.shape != (ds.m,):
        raise ValueError("weight vectors must match the dilation dimensions")
    if np.any(qx <= 0.0) or np.any(qu <= 0.0):
        raise ValueError("cost weights must be positive")
    ex = degree / ds.r
    eu = degree / ds.s
    if np.any(ex < 1.0) or np.any(eu < 1.0):
        raise ValueError(
            f"degree {degree} induces exponents below 1 (x: {ex}, u: {eu})")
    return StageCost(kind=kind, n=ds.n, m=ds.m, degree=float(degree),
                     dilation=ds, qx=qx, ex=ex, qu=qu, eu=eu)


def homogeneous_cost(ds: DilationStructure) -> StageCost:
    """Unit-weight dilated-power cost of degree ds.d."""
    return _power_cost("homogeneous", ds, np.ones(ds.n), np.ones(ds.m), ds.d)


def weighted_homogeneous_cost(ds: DilationStructure, qx=None, qu=None,
                              degree: float | None = None) -> StageCost:
    """Dilated-power cost with custom weights and optional degree override.

    Overriding ``degree`` keeps the cost homogeneous under the same dilation
    but with exponents degree/r_i and degree/s_j; it is rejected when any
    exponent would drop below 1.
    """
    qx = np.ones(ds.n) if qx is None else qx
    qu = np.ones(ds.m) if qu is None else qu
    degree = ds.d if degree is None else float(degree)
    if degree <= 0.0:
        raise ValueError("degree must be positive")
    return _power_cost("weighted_homogeneous", ds, qx, qu, degree)


def quadratic_cost(Q, R) -> StageCost:
    """l(x, u) = x'Qx + u'Ru with symmetric positive definite Q, R."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    for name, M in (("Q", Q), ("R", R)):
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"{name} must be square")
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
            raise ValueError(f"{name} must be symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError(f"{name} must be positive definite") from None
    return StageCost(kind="quadratic", n=Q.shape[0], m=R.shape[0],
                     degree=2.0, Q=Q, R=R)


def ell_star(cost: StageCost, x) -> float:
    """Pointwise lower bound min_u l(x, u) = l(x, 0)."""
    return cost.ell_star(x)


@dataclass(frozen=True, eq=False)
class CostHomogeneityReport:
    passed: bool
    alpha: float
    max_pointwise_error: float
    integral_error: float
    tol: float
    escaped: bool


def check_cost_homogeneity(sys, cost: StageCost, ds: DilationStructure, x0,
                           u, alpha: float, horizon: float, steps: int = 256,
                           tol: float = 1e-6) -> CostHomogeneityReport:
    """Verify the cost scaling law along dilated trajectories.

    Rolls out the pair of trajectories from :func:`check_trajectory_identity`
    on matched RK4 grids and compares, pointwise and in integral form,

        l(x_alpha(t), u_alpha(t)) == alpha**d l(x(a**tau t), u(a**tau t))
        J_alpha(horizon)          == alpha**(d - tau) J(a**tau horizon)

    where the alpha-subscripted objects start from Lambda_alpha x0 and use
    the dilated, time-reparameterised control.  Errors are relative to the
    size of the reference cost.
    """
    from . import systems

    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    scale = alpha ** ds.tau
    seg_t_r, seg_u_r = systems.signal_segments(u, scale * horizon)
    lens = np.diff(seg_t_r)
    substeps = np.maximum(1, np.ceil(
        lens / (scale * horizon / steps) - 1e-12).astype(np.int32))
    x0 = np.asarray(x0, dtype=float)
    esc_r, t_r, x_r, cum_r = systems.rollout_segments(
        sys, x0, seg_t_r, seg_u_r, substeps, cost=cost)
    seg_t_l = seg_t_r / scale
    seg_u_l = seg_u_r * alpha ** ds.s
    esc_l, t_l, x_l, cum_l = systems.rollout_segments(
        sys, x0 * alpha ** ds.r, seg_t_l, seg_u_l, substeps, cost=cost)
    escaped = bool(esc_r or esc_l)

    k = min(len(t_r), len(t_l))
    u_nodes_r = systems._node_controls(seg_u_r, substeps, k)
    ad = alpha ** cost.degree
    ell_l = np.array([cost.evaluate(x_l[j], u_nodes_r[j] * alpha ** ds.s)
                      for j in range(k)])
    ell_r = np.array([cost.evaluate(x_r[j], u_nodes_r[j]) for j in range(k)])
    denom = max(ad * float(np.max(ell_r, initial=0.0)), 1e-300)
    point_err = float(np.max(np.abs(ell_l - ad * ell_r), initial=0.0)) / denom

    j_scale = alpha ** (cost.degree - ds.tau)
    denom_j = max(abs(j_scale * cum_r[k - 1]), 1e-300)
    int_err = abs(cum_l[k - 1] - j_scale * cum_r[k - 1]) / denom_j \
        if cum_r[k - 1] != 0.0 else abs(cum_l[k - 1])

    return CostHomogeneityReport(
        passed=(not escaped) and point_err <= tol and int_err <= tol,
        alpha=float(alpha),
        max_pointwise_error=point_err,
        integral_error=int_err,
        tol=tol,
        escaped=escaped,
    )
