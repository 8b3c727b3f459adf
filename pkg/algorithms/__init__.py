"""
Numerical core of normground: grids, energies, ground states, dynamics.
"""

__version__ = "0.3.0"
