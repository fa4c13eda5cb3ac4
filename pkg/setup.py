"""Build script for the optional compiled solver kernels.

The package is pure Python plus one Cython extension holding the hot
inner loops of the finite-support divergence solvers.  The extension is
strictly optional: if it cannot be built (no compiler, no Cython), the
install proceeds and the library falls back to the numpy implementation
of the same algorithms at import time.
"""

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "gigan._kernels._solvers",
        ["src/gigan/_kernels/_solvers.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


class _OptionalBuildExt:
    """Marker so a failed extension build degrades to a pure install."""


try:
    setup(ext_modules=_extensions())
except Exception:  # pragma: no cover - compiler-less environments
    setup(ext_modules=[])
