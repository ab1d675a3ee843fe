"""Build script for the compiled clustering kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed: the build degrades to a
pure-Python install instead of failing. Build in place with:

    python setup.py build_ext --inplace
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Compile the extension if possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as e:  # missing compiler, broken toolchain
            self._warn(e)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as e:
            self._warn(e)

    @staticmethod
    def _warn(e):
        print(
            f"warning: building detrac._native failed ({e}); "
            "installing with the NumPy fallback kernels",
            file=sys.stderr,
        )


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as e:
        print(
            f"warning: {e}; skipping the compiled kernels "
            "(NumPy fallback will be used)",
            file=sys.stderr,
        )
        return []
    return cythonize(
        [
            Extension(
                "detrac._native",
                ["src/detrac/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
