import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are optional: rotostep.kernels falls back to the
# pure-numpy implementation when the extension is missing.
extensions = [
    Extension(
        "rotostep.kernels._fast",
        ["src/rotostep/kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
