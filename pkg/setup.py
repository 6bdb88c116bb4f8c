#!/usr/bin/env python
'''
DistCritic Setup
'''

from setuptools import setup
defaultdesc = open('DESC.txt').read().strip()
try:
    import pypandoc
except ImportError:
    print('Pypandoc not installed, using default description.')
    longdesc = defaultdesc
else:
    # Convert using pypandoc.
    try:
        longdesc = pypandoc.convert('README.md', 'rst')
    except EnvironmentError:
        print('\nREADME.md conversion failed!')
        longdesc = defaultdesc


setup(
    name='DistCritic',
    version='1.0.0',
    packages=['distcritic'],
    license='LICENSE.txt',
    description=defaultdesc,
    long_description=longdesc,
    keywords=' '.join((
        'python reinforcement learning distributional critic',
        'quantile regression td3 sac iqn fqf wasserstein',
    )),
    classifiers=[
        'Operating System :: POSIX :: Linux',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Software Development :: Libraries :: Python Modules'
    ],
    python_requires='>=3.7',
    install_requires=[
        'numpy >= 1.17',
        'scipy >= 1.7',
    ],
    extras_require={
        'all': ['pyyaml >= 3.12', 'toml >= 0.10.0'],
        'yaml': ['pyyaml >= 3.12'],
        'toml': ['toml >= 0.10.0'],
    },
    entry_points={
        'console_scripts': [
            'distcritic = distcritic.cli:main',
        ],
    },
)
