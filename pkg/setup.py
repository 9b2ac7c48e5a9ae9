import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "nem._ckernels",
        ["src/nem/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, language_level=3)
else:
    # Without Cython the package still installs; nem.kernels falls back to
    # the pure-numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
