"""Build script for the optional compiled activation kernels.

The package works without the extension (a numpy fallback is selected at
import time), so build failures here should not be fatal for pure-Python
usage; see src/difno/kernels.py.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "difno._ckernels",
        sources=["src/difno/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
