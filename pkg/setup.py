"""Packaging for qd_hyperfine.
"""
from codecs import open
from os import path

from setuptools import setup, find_packages

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='qd_hyperfine',
    version='0.1.0',
    description='Atomistic hyperfine maps, nuclear-field spreads and qubit '
                'error budgets of InAs/GaAs quantum dots',
    long_description=long_description,
    license='MIT',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Physics',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
    ],
    keywords='quantum dot hyperfine tight-binding nuclear spin qubit',
    packages=find_packages(exclude=['contrib', 'docs']),
    # bundled database, tight-binding parameters and example config
    package_data={
        'qd_hyperfine': ['data/*.json'],
        'qd_hyperfine.tests': ['data/*.json'],
    },
    install_requires=['attrs', 'numpy', 'scipy'],
    extras_require={
        'test': ['coverage'],
    },
    entry_points={
        'console_scripts': [
            'qd_hyperfine=qd_hyperfine.cli:main',
        ],
    },
)
