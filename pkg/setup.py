from setuptools import setup
from setuptools import find_packages

# find_packages will find all the packages with __init__.py
print(find_packages())

setup(
    name="finite-speed-flocking",
    version="0.1.0",
    description="""
    Cucker-Smale flocking with a finite information propagation speed:
    retarded-time integrator, flocking certificates and mean-field studies
    """,
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "duckdb",
        "plotly",
        "pyyaml",
        "click",
        "rich",
        "python-dotenv",
    ],
    extras_require={"test": ["pytest", "hypothesis"]},
    packages=find_packages(exclude=("test*", "explorations", "examples*")),
    py_modules=["main"],
    entry_points={"console_scripts": ["flock=main:cli"]},
)
