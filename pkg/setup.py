from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "cyclic_rca._ckernels",
                ["src/cyclic_rca/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3, "embedsignature": True},
    )
except ImportError:
    # no Cython: the package falls back to the NumPy kernels at import
    extensions = []

setup(ext_modules=extensions)
