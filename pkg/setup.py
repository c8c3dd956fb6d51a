"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python kernel is selected at
import time), so a failed compile only costs speed. Set CLMSEP_NO_EXT=1 to
skip the extension build entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CLMSEP_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/clmsep/_kernels/_fast.pyx"],
            compiler_directives={"language_level": "3"},
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            # No -ffast-math: the compiled kernel must be bit-identical to
            # the pure-Python reference (same IEEE operation sequence).
            ext.extra_compile_args.append("-O2")
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
