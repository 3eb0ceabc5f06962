"""
Install the package containing the edge auction simulator.
"""

from __future__ import print_function
import os
import os.path
import sys

from setuptools import setup

from edgeauction.constants import __version__


PKGNAME = 'edgeauction'

setup_args = dict (
    name=PKGNAME,
    version=__version__,
    description= 'Auction-based VM and bandwidth allocation in hierarchical edge computing',
    long_description=
'''This module simulates a mobile edge computing provider with field, shallow
and deep cloudlets. Every time frame it sells VMs to user bids through an
auction (a two-phase heuristic or an exact branch and bound); every time slot
it allocates the link bandwidth among the bids served away from their access
point.''',
    license='3-clause BSD license',

    packages=[ PKGNAME ],
    install_requires = [ 'setuptools',
                         'traitlets',
                         'numpy', ],
    extras_require = {
        'test': [ 'pytest', 'hypothesis' ] },

    entry_points = {
        'console_scripts':
        [ 'edgeauction = edgeauction.__main__:main'],
    },

    include_package_data = False,       # otherwise package_data is not used
    package_data = {
        PKGNAME : [ 'scenarios/*.scn' ],
    },

    keywords = ['edge computing', 'cloudlet', 'auction', 'VM placement', 'bandwidth allocation'],
    classifiers = [
          'Programming Language :: Python :: 3',
          'Programming Language :: Python :: 3.8',
          'License :: OSI Approved :: BSD License',
          'Development Status :: 4 - Beta',
          'Topic :: Scientific/Engineering',
          'Topic :: System :: Distributed Computing',
      ],
  )


if __name__ == '__main__':
    setup( **setup_args )
