"""Build hook for the optional Cython kernel; metadata lives in pyproject.toml."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("PROPINQ_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "propinq._kernels",
                    [os.path.join("src", "propinq", "_kernels.pyx")],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
