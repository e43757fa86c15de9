from setuptools import setup, find_packages

name = 'xgfem'
version = '1.0.0'

setup(
    name=name,
    version=version,
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    url='',
    license='',
    description='Extended Galerkin four-field finite elements for second-order elliptic problems',
    python_requires='>=3.10',
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'lxml',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': ['xg = xgfem.__main__:main'],
    },
)
