"""Builds the optional range-coder extension.

The package works without it: vnvc.entropy.coder falls back to the pure
Python kernel when the compiled module is missing.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "vnvc.entropy._range_fast",
                sources=["src/vnvc/entropy/_range_fast.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
