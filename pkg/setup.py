from setuptools import setup, Extension
from Cython.Build import cythonize

# -ffp-contract=off keeps the accumulation bit-identical to the pure-Python
# reference summation (no FMA fusion inside the inner loops).
ext = Extension(
    "litedepthwise.kernels._conv3d",
    ["src/litedepthwise/kernels/_conv3d.pyx"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
