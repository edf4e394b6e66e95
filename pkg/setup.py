from setuptools import setup, find_packages

setup(
    name="gedmrg",
    version="0.1",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=["numpy", "scipy", "pandas"],
    entry_points={"console_scripts": ["gedmrg = gedmrg.cli.cli:main"]},
)
