from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # No Cython available: ship the pure-Python sweep fallback only.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "sodta._kernels._hildreth",
                ["src/sodta/_kernels/_hildreth.pyx"],
                # -ffp-contract=off keeps the compiled sweep bit-identical to
                # the pure-Python fallback (no fused multiply-add).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
