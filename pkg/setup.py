from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the pure-Python fold
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("belief._fold", ["src/belief/_fold.pyx"], extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
