"""Build script for the optional compiled kernels.

The Cython extension is optional: if Cython or a C++ compiler is missing the
package installs without it and ``pvlab.kernels`` falls back to the pure
Python implementation.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PVLAB_NO_EXTENSION"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "pvlab._ckernels",
                    ["src/pvlab/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    language="c++",
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
