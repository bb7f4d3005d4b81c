# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel.

Mirror of ``_rollout_py.rollout`` (same dispatch ids, same RK4 update, same
power branches); see that module's docstring for the encoding tables.  Any
semantic change must land in both files or the parity test will catch it.
"""

from libc.math cimport cos, fabs, isfinite, pow, sin

import numpy as np

DEF NMAX = 32
DEF FREEZE_EPS = 1e-12

SYS_LINEAR = 0
SYS_DRIFTLESS3 = 1
SYS_SCALAR_POWER = 2
SYS_ROBOT = 3
SYS_ROBOT_APPROX = 4
SYS_DAMPED1D = 5

COST_NONE = 0
COST_POWER = 1
COST_QUADRATIC = 2


cdef inline double _powabs(double v, double e) noexcept nogil:
    cdef double a = fabs(v)
    if e == 1.0:
        return a
    if e == 2.0:
        return v * v
    if e == 3.0:
        return a * v * v
    if e == 4.0:
        a = v * v
        return a * a
    return pow(a, e)


cdef inline void _rhs(int sid, const double* sp, int n, int m,
                      const double* x, const double* u, double* out) noexcept nogil:
    cdef int i, j
    cdef double acc, k, a
    if sid == 1 or sid == 4:
        out[0] = u[0]
        out[1] = x[2] * u[0]
        out[2] = u[1]
    elif sid == 3:
        out[0] = cos(x[2]) * u[0]
        out[1] = sin(x[2]) * u[0]
        out[2] = u[1]
    elif sid == 2:
        k = sp[0]
        a = pow(fabs(x[0]), k)
        if x[0] > 0.0:
            out[0] = a + u[0]
        elif x[0] < 0.0:
            out[0] = -a + u[0]
        else:
            out[0] = u[0]
    elif sid == 5:
        out[0] = -fabs(x[0]) * (x[0] + u[0])
    else:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += sp[i * n + j] * x[j]
            for j in range(m):
                acc += sp[n * n + i * m + j] * u[j]
            out[i] = acc


cdef inline double _stage_cost(int cid, const double* cp, int n, int m,
                               const double* x, const double* u) noexcept nogil:
    cdef int i, j
    cdef double acc = 0.0, row
    if cid == 1:
        for i in range(n):
            acc += cp[i] * _powabs(x[i], cp[n + i])
        for i in range(m):
            acc += cp[2 * n + i] * _powabs(u[i], cp[2 * n + m + i])
    elif cid == 2:
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


def rollout(int sys_id, const double[::1] sys_params, int n, int m,
            const double[::1] x0, const double[::1] seg_t,
            const double[:, ::1] seg_u, const int[::1] substeps,
            int cost_id, const double[::1] cost_params,
            double guard, bint freeze, bint record):
    """See ``_rollout_py.rollout``; identical contract and return values."""
    cdef int nseg = seg_t.shape[0] - 1
    cdef int i, j, step, nsub, p, total
    cdef double x[NMAX]
    cdef double xt[NMAX]
    cdef double k1[NMAX]
    cdef double k2[NMAX]
    cdef double k3[NMAX]
    cdef double k4[NMAX]
    cdef double u[NMAX]
    cdef double base, h, c1, c2, c3, c4, cost
    cdef bint escaped = False, uzero, small, ok
    cdef const double* sp = NULL
    cdef const double* cp = NULL
    cdef double dummy = 0.0

    if n > NMAX or m > NMAX:
        raise ValueError("kernel supports at most %d states/controls" % NMAX)
    if sys_params.shape[0] > 0:
        sp = &sys_params[0]
    else:
        sp = &dummy
    if cost_params.shape[0] > 0:
        cp = &cost_params[0]
    else:
        cp = &dummy

    for i in range(n):
        x[i] = x0[i]

    cdef double[::1] times_v
    cdef double[:, ::1] states_v
    cdef double[::1] cum_v
    times = states = cum = None
    if record:
        total = 1
        for j in range(nseg):
            total += substeps[j]
        times = np.empty(total)
        states = np.empty((total, n))
        cum = np.empty(total)
        times_v = times
        states_v = states
        cum_v = cum
        times_v[0] = seg_t[0]
        for i in range(n):
            states_v[0, i] = x[i]
        cum_v[0] = 0.0

    cost = 0.0
    p = 1

    with nogil:
        for j in range(nseg):
            if escaped:
                break
            for i in range(m):
                u[i] = seg_u[j, i]
            base = seg_t[j]
            nsub = substeps[j]
            h = (seg_t[j + 1] - base) / nsub
            uzero = True
            for i in range(m):
                if u[i] != 0.0:
                    uzero = False
            for step in range(nsub):
                if freeze and uzero:
                    small = True
                    for i in range(n):
                        if fabs(x[i]) >= FREEZE_EPS:
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

                ok = isfinite(cost)
                if ok:
                    for i in range(n):
                        if not isfinite(x[i]) or fabs(x[i]) > guard:
                            ok = False
                            break
                if not ok:
                    escaped = True
                    break
                if record:
                    times_v[p] = base + (step + 1) * h
                    for i in range(n):
                        states_v[p, i] = x[i]
                    cum_v[p] = cost
                    p += 1

    if record:
        return bool(escaped), times[:p], states[:p], cum[:p]
    out = np.empty(n)
    for i in range(n):
        out[i] = x[i]
    return bool(escaped), out, cost
