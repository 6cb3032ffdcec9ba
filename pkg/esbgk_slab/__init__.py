"""esbgk-slab - stationary ES-BGK slab solver with mixed boundary conditions."""

__version__ = "0.1.0"
__author__ = "esbgk-slab developers"
__description__ = "Deterministic discrete-velocity ES-BGK slab solver with diagnostic ledgers"
