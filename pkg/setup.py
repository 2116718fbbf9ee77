from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "geoloceval._kernels._core",
                ["src/geoloceval/_kernels/_core.pyx"],
                optional=True,
            )
        ]
    )

setup(ext_modules=ext_modules)
