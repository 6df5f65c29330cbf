"""Numerics for free fermions with power-law hopping on Z^d.

Modules: ``lattice`` (geometry and lattice-sum constants), ``operators``
(block Hamiltonians and Majorana forms), ``dynamics`` (propagators and
Lieb-Robinson envelopes), ``filters`` and ``spectral`` (Green's functions,
covariance, contour integrals, bound states), ``topo`` (Bloch models and
gap certificates), ``jobs``/``cli`` (reproducible job runner).
"""

__version__ = "0.1.0"
