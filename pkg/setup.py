import logging

from setuptools import setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("bindetect._kernels", ["src/bindetect/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )


class optional_build_ext(build_ext):
    """A failed compile leaves the pure-Python kernels in charge."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            logging.warning("building the compiled kernels failed (%s); using fallback", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            logging.warning("could not build %s (%s); using fallback", ext.name, exc)


setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
