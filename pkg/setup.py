from setuptools import setup, find_packages

with open("requirements.txt") as f:
    install_requires = f.read().strip().split("\n")

# Get version from __version__ variable in wagegap/__init__.py
from wagegap import __version__ as version

setup(
    name="wagegap",
    version=version,
    description="Two-sided latent heterogeneity estimation and gender wage gap decomposition",
    author="Al-Aswany",
    author_email="user@example.com",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    zip_safe=False,
    include_package_data=True,
    install_requires=install_requires,
    extras_require={"test": ["pytest>=7.0", "scikit-learn>=1.1"]},
    entry_points={"console_scripts": ["wagegap=wagegap.cli:main"]},
    python_requires=">=3.9",
    license="MIT",
    classifiers=[
        "Development Status :: 4 - Beta",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering",
    ],
)
