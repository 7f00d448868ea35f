"""Builds the optional native extension holding the hot rendering kernels.

The package works without it (volvid.backend falls back to the numpy
implementations), so a failed compile only costs speed:

    pip install -e . --no-build-isolation
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "volvid._native",
                ["src/volvid/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
