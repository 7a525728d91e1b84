"""Numerical laboratory for the ultraviolet-cutoff Nelson model with an
infrared cutoff: atomic basis, boson Fock space, coupled ground states and
the infrared checks built on them."""

from .atomic import GridSpec, PotentialSpec, atomic_basis
from .field import build_modes, enumerate_fock
from .model import ModelConfig, assemble_hamiltonian
from .spectral import lanczos_ground, shifted_solve

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "PotentialSpec",
    "atomic_basis",
    "build_modes",
    "enumerate_fock",
    "ModelConfig",
    "assemble_hamiltonian",
    "lanczos_ground",
    "shifted_solve",
]
