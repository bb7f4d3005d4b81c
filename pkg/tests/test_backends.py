"""Parity between the compiled rollout kernel and its pure-Python twin."""

import os
import subprocess
import sys

import numpy as np
import pytest

import dilmpc as dm
from dilmpc import _backend, _rollout_py
from dilmpc.systems import builtin

_kernel = pytest.importorskip("dilmpc._kernel")


def _packed_case(sys_obj, cost, x0, horizon, segments, guard, seed):
    rng = np.random.default_rng(seed)
    seg_t = np.linspace(0.0, horizon, segments + 1)
    seg_u = np.ascontiguousarray(
        rng.uniform(-1.0, 1.0, size=(segments, sys_obj.m)))
    substeps = np.ascontiguousarray(
        rng.integers(2, 6, size=segments), dtype=np.int32)
    cid, cparams = cost.kernel_encoding()
    return (sys_obj.kernel_id,
            np.ascontiguousarray(sys_obj.kernel_params, dtype=float),
            sys_obj.n, sys_obj.m, np.asarray(x0, dtype=float), seg_t, seg_u,
            substeps, cid, np.ascontiguousarray(cparams, dtype=float),
            guard, sys_obj.freeze_origin)


def _cases():
    driftless = builtin("driftless3")
    k05 = builtin("scalar_power", k=0.5)
    k1 = builtin("scalar_power", k=1.0)
    k2 = builtin("scalar_power", k=2.0)
    robot = builtin("robot")
    approx = builtin("robot_approx")
    damped = builtin("damped1d")
    linear = builtin("linear", A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]])
    cases = [
        # integer cost exponents take the fast power branches
        _packed_case(driftless, dm.homogeneous_cost(driftless.declared_dilation),
                     [0.4, -0.3, 0.7], 1.5, 8, 1e6, 1),
        # fractional exponents exercise the generic pow branch
        _packed_case(k1, dm.weighted_homogeneous_cost(k1.declared_dilation,
                                                      degree=2.5),
                     [1.2], 2.0, 6, 1e6, 2),
        # freeze_origin snap once the state enters the origin deadband
        _packed_case(k05, dm.homogeneous_cost(k05.declared_dilation),
                     [1e-13], 1.0, 4, 1e6, 3),
        # guard escape truncates the rollout
        _packed_case(k2, dm.quadratic_cost([[1.0]], [[1.0]]),
                     [2.0], 4.0, 16, 5.0, 4),
        _packed_case(robot, dm.quadratic_cost(np.eye(3), np.eye(2)),
                     [0.3, -0.2, 0.5], 2.0, 10, 1e6, 5),
        _packed_case(approx, dm.homogeneous_cost(approx.declared_dilation),
                     [0.2, 0.1, -0.4], 1.0, 5, 1e6, 6),
        _packed_case(damped, dm.homogeneous_cost(damped.declared_dilation),
                     [0.8], 3.0, 9, 1e6, 7),
        _packed_case(linear, dm.quadratic_cost(np.eye(2), [[1.0]]),
                     [1.0, -0.5], 2.0, 8, 1e6, 8),
    ]
    return cases


def test_compiled_backend_is_selected_by_default():
    assert _backend.HAVE_KERNEL
    assert _backend.BACKEND == "cython"
    assert _backend.rollout is _kernel.rollout


def test_final_state_and_cost_parity():
    for args in _cases():
        esc_py, x_py, c_py = _rollout_py.rollout(*args, False)
        esc_cy, x_cy, c_cy = _kernel.rollout(*args, False)
        assert esc_py == esc_cy
        np.testing.assert_allclose(x_cy, x_py, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(c_cy, c_py, rtol=1e-12, atol=1e-14)


def test_recorded_trajectory_parity():
    for args in _cases():
        esc_py, t_py, s_py, q_py = _rollout_py.rollout(*args, True)
        esc_cy, t_cy, s_cy, q_cy = _kernel.rollout(*args, True)
        assert esc_py == esc_cy
        assert t_py.shape == t_cy.shape
        np.testing.assert_allclose(t_cy, t_py, rtol=0, atol=0)
        np.testing.assert_allclose(s_cy, s_py, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(q_cy, q_py, rtol=1e-12, atol=1e-14)


def test_escape_truncation_matches():
    k2 = builtin("scalar_power", k=2.0)
    args = _packed_case(k2, dm.quadratic_cost([[1.0]], [[1.0]]),
                        [2.0], 4.0, 16, 5.0, 4)
    esc_py, t_py, s_py, _ = _rollout_py.rollout(*args, True)
    esc_cy, t_cy, s_cy, _ = _kernel.rollout(*args, True)
    assert esc_py and esc_cy
    # both stop at the same node, before anything beyond the guard is stored
    assert t_py.shape == t_cy.shape
    assert t_py[-1] == t_cy[-1] < 4.0
    assert np.max(np.abs(s_cy)) <= 5.0


def test_freeze_deadband_snaps_to_zero_in_both():
    # the snap applies only while the control is identically zero, so that an
    # origin-crossing trajectory is not glued down against an active input
    k05 = builtin("scalar_power", k=0.5)
    args = list(_packed_case(k05, dm.homogeneous_cost(k05.declared_dilation),
                             [1e-13], 1.0, 4, 1e6, 3))
    args[6] = np.zeros_like(args[6])
    for impl in (_rollout_py, _kernel):
        escaped, x_final, cost = impl.rollout(*args, False)
        assert not escaped
        assert x_final[0] == 0.0
        assert cost == 0.0


def test_powabs_matches_generic_power():
    for v in (-2.3, -1.0, -0.5, 0.0, 0.7, 1.9):
        for e in (1.0, 2.0, 3.0, 4.0, 0.5, 2.5, 8.0 / 3.0):
            assert _rollout_py._powabs(v, e) == pytest.approx(
                abs(v) ** e, rel=1e-15, abs=0.0)


def test_environment_variable_forces_the_python_backend():
    env = dict(os.environ, DILMPC_PURE_PYTHON="1")
    probe = "from dilmpc._backend import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", probe], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("DILMPC_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", probe], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
