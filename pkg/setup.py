from setuptools import setup, find_packages

setup(
    name = "mstat",
    version = "0.1.0",
    description = "Multi-stage spatio-temporal aggregation transformer for video person re-identification, on numpy",
    classifiers = [
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Image Recognition"
    ],
    keywords = [
        "re-identification",
        "video",
        "transformer",
        "attention",
        "autograd",
        "numpy",
        "python3"
    ],
    python_requires = ">=3.8",
    install_requires = [
        "numpy"
    ],
    extras_require = {
        "images"    : ["matplotlib"],
        "test"      : ["pytest", "hypothesis"]
    },
    setup_requires = [
        "wheel"
    ],
    entry_points = {
        "console_scripts": ["mstat = mstat.cli:main"]
    },
    packages = find_packages(exclude = ["tests", "examples", "examples.*"]),

)
