"""fermicond: a finite-volume laboratory for charge transport of interacting
lattice fermions in disordered media."""

__version__ = "0.1.0"
