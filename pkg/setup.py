import os

import numpy as np
from setuptools import Extension, setup

ext_kwargs = dict(include_dirs=[np.get_include()], define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])
if os.name != "nt":
    ext_kwargs["extra_compile_args"] = ["-O3"]

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("robpcr._kernels", ["src/robpcr/_kernels.pyx"], **ext_kwargs)],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # pure-Python fallback is selected at import time
    extensions = []

setup(ext_modules=extensions)
