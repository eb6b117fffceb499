"""Build script: compiles the exterior-algebra kernel extension when possible.

The package works without the extension (pure-Python kernels are selected at
import time), so a failed compile only costs speed.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/caldef/_kernels/_cy.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"caldef: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
