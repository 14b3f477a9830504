import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

flags = ["-O3", "-ffp-contract=off"]
if os.environ.get("TRIMSGD_NATIVE"):
    flags.append("-march=native")

extensions = [
    Extension(
        "trimsgd._ckernels",
        ["src/trimsgd/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=flags,
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
    zip_safe=False,
)
