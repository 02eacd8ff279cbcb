"""Build script.

The compiled kernel extension is optional: if Cython or a C compiler is
unavailable, the install proceeds and the package falls back to the numpy
reference kernels at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "mssforge.kernels._fastcore",
                ["src/mssforge/kernels/_fastcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # noqa: BLE001
    print(f"building without compiled kernels: {exc}")

setup(ext_modules=ext_modules)
