"""Build script: compiles the optional Cython physics kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only prints a warning.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Tolerate a missing compiler; the numpy fallback takes over."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping Cython kernel build ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping {ext.name} ({exc})")


def extensions():
    import os

    if not os.path.exists("src/gamp/sim/_kernels.pyx"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    import numpy

    ext = Extension(
        "gamp.sim._kernels",
        sources=["src/gamp/sim/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
