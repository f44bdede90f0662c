import os

import numpy as np
from setuptools import Extension, setup

# NSLAB_NO_EXT=1 skips the compiled core; the numpy fallback is used instead.
ext_modules = []
if not os.environ.get("NSLAB_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "nslab._core",
                ["src/nslab/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # contraction off: results must match the numpy fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
