import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package still works through the NumPy fallback
    cythonize = None

ext_modules = []
cflags = ["-O3"]
if os.environ.get("LINDLEARN_NATIVE"):
    cflags.append("-march=native")
if cythonize is not None and not os.environ.get("LINDLEARN_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "lindlearn._kernels",
                ["src/lindlearn/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=cflags,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
