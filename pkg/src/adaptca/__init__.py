"""Adaptive cellular automata: Ising self-organization and plastic neural grids."""
import os

# The bundled TBB is often too old for numba; OpenMP is always available.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
