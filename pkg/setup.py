import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the Cython kernels when possible; the package falls back to the
    pure-numpy implementation if compilation is unavailable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler on this host
            print(f"warning: skipping compiled kernels ({exc}); "
                  "pure-python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "pure-python fallback will be used")


ext_modules = []
if not os.environ.get("DEXFORGE_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension(
                "dexforge._kernels._core",
                ["src/dexforge/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
            )],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
