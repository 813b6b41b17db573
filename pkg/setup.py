from setuptools import setup, find_packages

setup(
    name="vi_sharp",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "pydantic>=2.6.0",
        "pydantic-settings>=2.1.0",
        "python-dotenv>=1.0.0",
        "loguru>=0.7.2",
        "numpy>=1.26.0",
        "scipy>=1.11.0",
    ],
    entry_points={"console_scripts": ["vi-sharp=vi_sharp.main:main"]},
)
