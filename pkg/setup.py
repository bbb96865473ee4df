"""Build script: compiles the routing kernels extension when a toolchain is
available, otherwise installs with the pure-Python fallback only."""

import sys

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/nds/kernels/_speedups.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except Exception as exc:  # pragma: no cover - toolchain-less installs
    print(f"kernel extension skipped ({exc}); using pure-Python fallback", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
