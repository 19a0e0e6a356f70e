"""Install fbin-link."""

import os
from setuptools import setup

from version import get_version

repo_base_dir = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(repo_base_dir, "README.md")) as f:
    description = f.read()

setup(
    name="fbin-link",
    python_requires=">=3.8",
    license="MIT",
    version=get_version(),
    packages=["fbin_link"],
    package_data={"fbin_link": ["py.typed", "schema/*.json"]},
    zip_safe=False,
    install_requires=[
        "jsonschema>=3.2.0",
        "packaging>=20.0",
        "numpy>=1.20",
        "scipy>=1.6",
    ],
    extras_require={
        "test": [
            "pytest>=6.0",
            "mypy>=0.910",
        ],
    },
    entry_points={
        "console_scripts": ["fbin-link=fbin_link.cli:main"],
    },
    description="Frequency-bin qubit link modeling and time-tag beat-note analysis",
    long_description=description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3 :: Only",
        "Topic :: Scientific/Engineering :: Physics",
        "Typing :: Typed",
    ],
)
