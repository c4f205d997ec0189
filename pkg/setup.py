import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source installs without Cython
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "fpca._core",
                ["src/fpca/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # Pure-Python fallback in fpca._core_py keeps the package functional.
    ext_modules = []

setup(ext_modules=ext_modules)
