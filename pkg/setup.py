import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "inclusionlab.backends._core",
                ["src/inclusionlab/backends/_core.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off: no FMA contraction, so the compiled
                # kernels round exactly like the numpy fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
