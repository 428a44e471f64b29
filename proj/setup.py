"""Builds the mmfl._core extension straight from the C++ sources.

The CMake tree stays the primary build (CLI, tests, in-tree python
staging); this setup script only exists so `pip install` works without a
CMake-driving backend. Both compile the same sources with the same
standard.
"""

import glob
import os

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup


def eigen_include() -> str:
    override = os.environ.get("EIGEN3_INCLUDE_DIR")
    candidates = [override] if override else []
    candidates += ["/usr/include/eigen3", "/usr/local/include/eigen3"]
    for cand in candidates:
        if cand and os.path.isdir(cand):
            return cand
    raise RuntimeError("Eigen headers not found; set EIGEN3_INCLUDE_DIR")


ParallelCompile("MMFL_NUM_BUILD_JOBS", default=os.cpu_count() or 1).install()

ext = Pybind11Extension(
    "mmfl._core",
    sorted(glob.glob("src/*.cpp")) + ["bindings/module.cpp"],
    include_dirs=["include", eigen_include()],
    cxx_std=20,
    extra_compile_args=["-pthread"],
    extra_link_args=["-pthread"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
