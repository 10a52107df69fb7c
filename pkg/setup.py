"""Build script for the optional compiled LCS kernel.

The extension is a speedup only; installs must succeed without a C
toolchain, in which case litkg.lcs falls back to pure Python at import.
"""
from setuptools import setup
from setuptools.command.build_ext import build_ext


class BuildExtOptional(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(f"skipping optional extension build: {exc}")


from setuptools import Extension

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "litkg._lcs",
                ["src/litkg/_lcs.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: compile the checked-in generated C instead.
    extensions = [
        Extension("litkg._lcs", ["src/litkg/_lcs.c"], extra_compile_args=["-O3"])
    ]

setup(ext_modules=extensions, cmdclass={"build_ext": BuildExtOptional})
