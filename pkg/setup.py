import os

import numpy as np
from setuptools import Extension, setup

# Building without Cython (or with Q8SSP_NO_EXT=1) leaves the pure-Python
# kernels in charge; q8ssp.kernels picks whichever is importable.
extensions = []
if not os.environ.get("Q8SSP_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "q8ssp._ckernels",
                    ["src/q8ssp/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=extensions)
