"""CMake-backed build of the refprime._core extension.

`pip install . --no-build-isolation` configures the CMake project with only
the python module enabled and copies the built extension into the wheel.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).parent.resolve()
        ext_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        package_dir = ext_path.parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cfg = "Debug" if self.debug else "Release"
        configure = [
            "cmake",
            "-S", str(source_dir),
            "-B", str(build_dir),
            f"-DCMAKE_BUILD_TYPE={cfg}",
            "-DREFPRIME_BUILD_TESTS=OFF",
            "-DREFPRIME_BUILD_CLI=OFF",
            "-DREFPRIME_BUILD_PYTHON=ON",
            f"-DPython3_EXECUTABLE={sys.executable}",
        ]
        subprocess.run(configure, check=True)
        jobs = str(os.cpu_count() or 2)
        subprocess.run(["cmake", "--build", str(build_dir), "-j", jobs], check=True)

        built = build_dir / "python" / "refprime"
        package_dir.mkdir(parents=True, exist_ok=True)
        for so in built.glob("_core*"):
            self.copy_file(str(so), str(ext_path))


setup(
    packages=["refprime"],
    package_dir={"refprime": "python/refprime"},
    ext_modules=[CMakeExtension("refprime._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
