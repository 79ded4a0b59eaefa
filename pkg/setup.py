from setuptools import setup

setup(
    name="littlewood-offord-toolkit",
    version="0.1.0",
    description="Exact and numerical tools for Littlewood-Offord inverse problems",
    py_modules=["config", "errors", "models", "main"],
    packages=["agents", "tools"],
    python_requires=">=3.9",
    install_requires=[
        "python-dotenv>=1.0.0",
        "pydantic>=2.7.0",
        "numpy>=1.24.0",
    ],
    entry_points={"console_scripts": ["lo-toolkit=main:main"]},
)
