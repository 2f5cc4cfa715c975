"""Build script: compiles the optional fixed-point kernel extension.

The extension is marked optional; if Cython or a C compiler is missing the
package falls back to the pure numpy kernel at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "qnncheck._fxpcore",
        sources=["src/qnncheck/_fxpcore.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
