from setuptools import setup, find_packages

with open("requirements.txt") as f:
    requirements = f.read().splitlines()

setup(
    name="FringeProver",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    include_package_data=True,
    install_requires=requirements,
    python_requires=">=3.10",
    entry_points="""
        [console_scripts]
        FringeProver=app.main:cli
    """,
    description="A reinforcement-learning guided tactic prover for propositional logic",
)
