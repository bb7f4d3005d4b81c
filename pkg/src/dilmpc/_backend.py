"""Backend selection for the rollout kernel.

Prefers the compiled Cython extension, falls back to the pure-Python
implementation when the extension is missing or when the environment
variable ``DILMPC_PURE_PYTHON`` is set (useful for debugging and for the
backend parity tests).
"""

import os

from . import _rollout_py

SYS_LINEAR = _rollout_py.SYS_LINEAR
SYS_DRIFTLESS3 = _rollout_py.SYS_DRIFTLESS3
SYS_SCALAR_POWER = _rollout_py.SYS_SCALAR_POWER
SYS_ROBOT = _rollout_py.SYS_ROBOT
SYS_ROBOT_APPROX = _rollout_py.SYS_ROBOT_APPROX
SYS_DAMPED1D = _rollout_py.SYS_DAMPED1D

COST_NONE = _rollout_py.COST_NONE
COST_POWER = _rollout_py.COST_POWER
COST_QUADRATIC = _rollout_py.COST_QUADRATIC

if os.environ.get("DILMPC_PURE_PYTHON"):
    _impl = _rollout_py
    HAVE_KERNEL = False
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]

        HAVE_KERNEL = True
    except ImportError:
        _impl = _rollout_py
        HAVE_KERNEL = False

rollout = _impl.rollout
BACKEND = "cython" if HAVE_KERNEL else "python"
