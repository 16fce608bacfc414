from setuptools import find_packages, setup


requirements = [
    'click',
    'numpy',
    'python-dotenv',
    'ruff',
]

extras = {
    'test': ['pytest'],
}


setup(
    name='meta_attn',
    python_requires='>=3.10',
    install_requires=requirements,
    extras_require=extras,
    packages=find_packages(exclude=['tests']),
    py_modules=['meta_attn'],
    entry_points={'console_scripts': ['meta-attn=meta_attn:cli']},
)
