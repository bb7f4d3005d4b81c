#!/usr/bin/env python3
"""Time the compiled rollout kernel against the pure-Python fallback.

The rollout (RK4 integration plus running-cost quadrature) is the inner
loop of every solver in the package, so this is the single number that
decides end-to-end speed.  Run from the repository root:

    python3 benchmarks/benchmark_backends.py [--repeats 7] [--number 200]

Each case reports the best-of-repeats time per rollout for both
implementations and the resulting speedup.
"""

import argparse
import timeit

import numpy as np

import dilmpc as dm
from dilmpc import _rollout_py
from dilmpc.systems import builtin

try:
    from dilmpc import _kernel
except ImportError:
    _kernel = None


def _pack(sys_obj, cost, x0, horizon, segments, substeps, seed):
    rng = np.random.default_rng(seed)
    seg_t = np.linspace(0.0, horizon, segments + 1)
    seg_u = np.ascontiguousarray(
        rng.uniform(-1.0, 1.0, size=(segments, sys_obj.m)))
    subs = np.full(segments, substeps, dtype=np.int32)
    cid, cparams = cost.kernel_encoding()
    return (sys_obj.kernel_id,
            np.ascontiguousarray(sys_obj.kernel_params, dtype=float),
            sys_obj.n, sys_obj.m, np.asarray(x0, dtype=float), seg_t, seg_u,
            subs, cid, np.ascontiguousarray(cparams, dtype=float),
            1e6, sys_obj.freeze_origin, False)


def cases():
    drift = builtin("driftless3")
    k05 = builtin("scalar_power", k=0.5)
    robot = builtin("robot")
    return [
        ("driftless3, dilated cost, 16 segments",
         _pack(drift, dm.homogeneous_cost(drift.declared_dilation),
               [0.0, 0.2, 0.0], 4.0, 16, 4, 1)),
        ("scalar k=0.5, dilated cost, 32 segments",
         _pack(k05, dm.weighted_homogeneous_cost(k05.declared_dilation,
                                                 degree=2.0),
               [1.0], 2.0, 32, 4, 2)),
        ("robot, quadratic cost, 12 segments",
         _pack(robot, dm.quadratic_cost(np.eye(3), np.eye(2)),
               [0.5, 0.5, 0.5], 3.0, 12, 4, 3)),
    ]


def best_time(fn, args, number, repeats):
    timer = timeit.Timer(lambda: fn(*args))
    return min(timer.repeat(repeats, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repeats; the best one is reported")
    parser.add_argument("--number", type=int, default=200,
                        help="rollouts per repeat")
    args = parser.parse_args(argv)

    if _kernel is None:
        print("compiled kernel not available; showing pure-Python times only")
    print(f"{'case':<44} {'python':>12} {'cython':>12} {'speedup':>9}")
    for label, packed in cases():
        t_py = best_time(_rollout_py.rollout, packed, args.number,
                         args.repeats)
        if _kernel is not None:
            t_cy = best_time(_kernel.rollout, packed, args.number,
                             args.repeats)
            print(f"{label:<44} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us "
                  f"{t_py / t_cy:>8.1f}x")
        else:
            print(f"{label:<44} {t_py * 1e6:>10.1f}us {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
