import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("TAILFORGE_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install; kernels fall back at import
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "tailforge._ckernels",
                    ["src/tailforge/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
