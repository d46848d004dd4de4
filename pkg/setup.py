from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy

# -ffp-contract=off keeps the bilinear warp bit-identical to the numpy
# fallback (FMA contraction would change float64 rounding).
ext_modules = [
    Extension(
        "facedup._kernels._ckernels",
        sources=["src/facedup/_kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level="3"))
