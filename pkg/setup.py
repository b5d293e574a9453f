"""Build script for the optional compiled LSTM kernels.

The package works without the extension (a pure-numpy fallback is selected at
import time), so any failure here degrades to a warning instead of breaking
the install.  Set MELODYLSTM_PURE_PYTHON=1 to skip the extension entirely.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class OptionalBuildExt(build_ext):
    """Treat extension build failures as non-fatal."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any compiler failure
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: building the fused LSTM kernels failed ({exc}); "
            "falling back to the pure-numpy backend.",
            file=sys.stderr,
        )


def extensions():
    if os.environ.get("MELODYLSTM_PURE_PYTHON") or cythonize is None:
        return []
    compile_args = ["-O3"]
    link_args = []
    if sys.platform.startswith("linux"):
        # -ffast-math only at compile time: linking with it would pull in
        # crtfastmath.o and flip FTZ/DAZ for the whole process on import.
        compile_args += ["-march=native", "-ffast-math"]
        link_args += ["-lmvec", "-lm"]
    ext = Extension(
        "melodylstm.kernels._fused",
        ["src/melodylstm/kernels/_fused.pyx"],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
