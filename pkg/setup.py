import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package works without the compiled core
    cythonize = None

# Exact IEEE arithmetic: the compiled loop must reproduce the Python reference bit for bit.
CFLAGS = ["-O3", "-fno-fast-math", "-ffp-contract=off"]

ext_modules = []
if cythonize is not None and os.environ.get("SHOCKLAB_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "shocklab._engine",
                ["src/shocklab/_engine.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=CFLAGS,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
