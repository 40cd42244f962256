"""Build script for the optional compiled kernels.

The extension is marked optional: if Cython or a C compiler with OpenMP is
missing, the package still installs and falls back to the numpy kernels.
"""
import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without the extension
    ext_modules = []
else:
    openmp = [] if os.environ.get("LONGLIQ_NO_OPENMP") else ["-fopenmp"]
    ext_modules = cythonize(
        [
            Extension(
                "longliq._ckernels",
                ["src/longliq/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
