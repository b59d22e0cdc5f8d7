"""Normal frames, torsion and Coulomb gauges for surfaces in Euclidean space."""

__version__ = "0.1.0"
