import os
import sys

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback kernels are used at import time
    cythonize = None

openmp = [] if sys.platform == "darwin" or os.environ.get("NELSONLAB_NO_OPENMP") else ["-fopenmp"]

extensions = []
if cythonize is not None and not os.environ.get("NELSONLAB_PURE_PYTHON"):
    extensions = cythonize(
        [
            Extension(
                "nelsonlab._kernels._ckernels",
                ["src/nelsonlab/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"] + openmp,
                extra_link_args=openmp,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
