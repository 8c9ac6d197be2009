import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "biomech._native",
                ["src/biomech/_native.pyx"],
                include_dirs=[numpy.get_include()],
                # No FMA contraction: the compiled kernels must round exactly
                # like the numpy fallback so both backends stay bit-identical.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # The package still works without the compiled core; the numpy
    # fallback kernels are selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
