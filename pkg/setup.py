"""FENDI

Fidelity-aware ENtanglement DIstribution
"""

from setuptools import setup


# package version
MAJOR = 1
MINOR = 0
ATTR = '0'
# full acronym
ACRONYM = 'Fidelity-aware ENtanglement DIstribution in quantum repeater networks'

setup(name="fendi",
      version=f'{MAJOR}.{MINOR}.{ATTR}',
      description=ACRONYM,
      long_description=open('README.md').read(),
      long_description_content_type='text/markdown',
      packages=['fendi'],
      package_dir={'fendi': 'fendi'},
      package_data={'fendi': ['data/staircase.json', 'data/chain.json']},
      include_package_data=True,
      python_requires='>=3.10',
      install_requires=['numpy', 'scipy>=1.9', 'numba', 'h5py', 'networkx'],
      extras_require={'test': ['pytest']},
      entry_points={'console_scripts': ['fendi=fendi.cli:main']}
     )
