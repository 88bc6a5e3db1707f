"""Regenerate setup.py and requirements.txt from pyproject.toml."""
import os
import sys

poetry_python_lib = os.path.expanduser("~/.poetry/lib")
sys.path.append(os.path.realpath(poetry_python_lib))

from poetry.masonry.builders.sdist import SdistBuilder
from poetry.factory import Factory

here = os.path.dirname(os.path.abspath(__file__))
poetry = Factory().create_poetry(here)

setuppy_blob = SdistBuilder(poetry, None, None).build_setup()
with open(os.path.join(here, "setup.py"), "wb") as unit:
    unit.write(setuppy_blob)
    unit.write(b"\n# This setup.py was autogenerated using poetry.\n")

# Runtime dependencies only; pins follow the pyproject constraints.
requirements = []
for dependency in poetry.package.requires:
    if dependency.name == "python":
        continue
    constraint = str(dependency.constraint).replace(" ", "")
    requirements.append(f"{dependency.name}{constraint}")
with open(os.path.join(here, "requirements.txt"), "w") as unit:
    unit.write("\n".join(sorted(requirements)) + "\n")
