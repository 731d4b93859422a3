"""Build script for the optional compiled kernel backend.

The package is fully functional without the extension; the numpy reference
backend is selected at import time when `monoflow._kernels.fastkern` is
missing.  Any build failure here therefore degrades to a warning.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class OptionalBuildExt(build_ext):
    """Build the Cython kernels if possible, otherwise keep going."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            warnings.warn(f"skipping compiled kernels: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping compiled kernel {ext.name}: {exc}")


extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "monoflow._kernels.fastkern",
                ["src/monoflow/_kernels/fastkern.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
