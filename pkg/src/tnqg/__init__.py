"""Global-in-time variational dynamics of spin lattices with neural
Galerkin states: a time-dependent linear combination of complex RBM basis
states optimized against the integrated Schrodinger residual."""

__version__ = "0.1.0"
