"""Build the optional compiled rollout kernel.

The package works without it (a pure-Python fallback is selected at import
time), so a missing Cython toolchain only costs speed, not functionality.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("dilmpc._kernel", ["src/dilmpc/_kernel.pyx"])],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
