"""Pure-Python rollout fallback.

This module is the reference semantics for the compiled kernel in
``_kernel.pyx``: same system/cost dispatch tables, same RK4 update, same
power/abs branching, same guard and freeze handling.  Keeping the two
implementations statement-for-statement parallel is what makes the backend
parity test meaningful, so edits here must be mirrored there.

Systems are encoded by integer id plus a flat parameter vector:

    0  linear         params = [A row-major (n*n), B row-major (n*m)]
    1  driftless3     params = []
    2  scalar_power   params = [k]
    3  robot          params = []
    4  robot_approx   params = []
    5  damped1d       params = []

Running costs likewise:

    0  none
    1  power          params = [qx (n), ex (n), qu (m), eu (m)]
    2  quadratic      params = [Q row-major (n*n), R row-major (m*m)]
"""

import math

import numpy as np

SYS_LINEAR = 0
SYS_DRIFTLESS3 = 1
SYS_SCALAR_POWER = 2
SYS_ROBOT = 3
SYS_ROBOT_APPROX = 4
SYS_DAMPED1D = 5

COST_NONE = 0
COST_POWER = 1
COST_QUADRATIC = 2

FREEZE_EPS = 1e-12


def _powabs(v, e):
    # |v|**e with cheap exact branches for the common small integer exponents.
    a = abs(v)
    if e == 1.0:
        return a
    if e == 2.0:
        return v * v
    if e == 3.0:
        return a * v * v
    if e == 4.0:
        a = v * v
        return a * a
    return math.pow(a, e)


def _rhs(sid, sp, n, m, x, u, out):
    if sid == SYS_DRIFTLESS3 or sid == SYS_ROBOT_APPROX:
        out[0] = u[0]
        out[1] = x[2] * u[0]
        out[2] = u[1]
    elif sid == SYS_ROBOT:
        out[0] = math.cos(x[2]) * u[0]
        out[1] = math.sin(x[2]) * u[0]
        out[2] = u[1]
    elif sid == SYS_SCALAR_POWER:
        k = sp[0]
        a = math.pow(abs(x[0]), k)
        if x[0] > 0.0:
            out[0] = a + u[0]
        elif x[0] < 0.0:
            out[0] = -a + u[0]
        else:
            out[0] = u[0]
    elif sid == SYS_DAMPED1D:
        out[0] = -abs(x[0]) * (x[0] + u[0])
    else:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += sp[i * n + j] * x[j]
            for j in range(m):
                acc += sp[n * n + i * m + j] * u[j]
            out[i] = acc


def _stage_cost(cid, cp, n, m, x, u):
    acc = 0.0
    if cid == COST_POWER:
        for i in range(n):
            acc += cp[i] * _powabs(x[i], cp[n + i])
        for i in range(m):
            acc += cp[2 * n + i] * _powabs(u[i], cp[2 * n + m + i])
    elif cid == COST_QUADRATIC:
        for i in range(n):
            row = 0.0
            for j in range(n):
                row += cp[i * n + j] * x[j]
            acc += x[i] * row
        for i in range(m):
            row = 0.0
            for j in range(m):
                row += cp[n * n + i * m + j] * u[j]
            acc += u[i] * row
    return acc


def rollout(sys_id, sys_params, n, m, x0, seg_t, seg_u, substeps,
            cost_id, cost_params, guard, freeze, record):
    """RK4 rollout with piecewise-constant controls and cost quadrature.

    ``seg_t`` holds the N+1 segment breakpoints, ``seg_u`` the N constant
    control rows, ``substeps`` the per-segment RK4 step counts.  The running
    cost is integrated alongside the state by the same RK4 tableau.  If any
    state component leaves ``[-guard, guard]`` or goes non-finite the rollout
    stops early and the escaped flag is set; the offending node is *not*
    recorded.

    Returns ``(escaped, times, states, cum)`` when ``record`` is true, with
    one row per RK4 node including t0, else ``(escaped, x_final, cost)``.
    """
    sp = [float(v) for v in sys_params]
    cp = [float(v) for v in cost_params]
    x = [float(v) for v in x0]
    nseg = len(seg_t) - 1

    if record:
        total = 1
        for j in range(nseg):
            total += int(substeps[j])
        times = np.empty(total)
        states = np.empty((total, n))
        cum = np.empty(total)
        times[0] = seg_t[0]
        for i in range(n):
            states[0, i] = x[i]
        cum[0] = 0.0
    else:
        times = states = cum = None

    k1 = [0.0] * n
    k2 = [0.0] * n
    k3 = [0.0] * n
    k4 = [0.0] * n
    xt = [0.0] * n
    cost = 0.0
    escaped = False
    p = 1

    for j in range(nseg):
        if escaped:
            break
        u = [float(seg_u[j][i]) for i in range(m)]
        base = float(seg_t[j])
        nsub = int(substeps[j])
        h = (float(seg_t[j + 1]) - base) / nsub
        uzero = True
        for i in range(m):
            if u[i] != 0.0:
                uzero = False
        for step in range(nsub):
            if freeze and uzero:
                small = True
                for i in range(n):
                    if abs(x[i]) >= FREEZE_EPS:
                        small = False
                        break
                if small:
                    for i in range(n):
                        x[i] = 0.0
            _rhs(sys_id, sp, n, m, x, u, k1)
            c1 = _stage_cost(cost_id, cp, n, m, x, u)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k1[i]
            _rhs(sys_id, sp, n, m, xt, u, k2)
            c2 = _stage_cost(cost_id, cp, n, m, xt, u)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k2[i]
            _rhs(sys_id, sp, n, m, xt, u, k3)
            c3 = _stage_cost(cost_id, cp, n, m, xt, u)
            for i in range(n):
                xt[i] = x[i] + h * k3[i]
            _rhs(sys_id, sp, n, m, xt, u, k4)
            c4 = _stage_cost(cost_id, cp, n, m, xt, u)
            for i in range(n):
                x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            cost = cost + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)

            ok = math.isfinite(cost)
            if ok:
                for i in range(n):
                    if not math.isfinite(x[i]) or abs(x[i]) > guard:
                        ok = False
                        break
            if not ok:
                escaped = True
                break
            if record:
                times[p] = base + (step + 1) * h
                for i in range(n):
                    states[p, i] = x[i]
                cum[p] = cost
                p += 1

    if record:
        return escaped, times[:p], states[:p], cum[:p]
    return escaped, np.array(x), cost
