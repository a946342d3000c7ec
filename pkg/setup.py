"""Build the optional compiled kernel extension.

The package works without it: ``vqpd.kernels`` falls back to numpy when
``vqpd.kernels._ckernels`` cannot be imported.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "vqpd.kernels._ckernels",
                ["src/vqpd/kernels/_ckernels.pyx"],
                # no FMA contraction: both backends must round identically
                extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
