"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LATWAVE_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("latwave._ckernels", ["src/latwave/_ckernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
