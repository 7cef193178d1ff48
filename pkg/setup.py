"""Build script: compiles the Metropolis sweep kernel when Cython and a C
compiler are available.  The package falls back to the pure-Python kernel
at import time if the extension is missing, so a failed compile is not
fatal to installation."""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/tnqg/_kernels/metropolis_cy.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)
