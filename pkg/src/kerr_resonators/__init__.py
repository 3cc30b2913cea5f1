"""Subwavelength resonances of high-contrast Kerr dielectric particles.

Volume-integral (Lippmann-Schwinger) discretization of u = tau w^2 K^w[u + |u|^2 u]
on lattice meshes, with linear resonance solvers, nonlinear branch continuation
and symmetry-breaking analysis for symmetric dimers.
"""

__version__ = "0.1.0"

from .mesh import DomainSpec, Mesh, build_mesh
from .spectra import SpectralPair, top_eigenpairs
from .resonance import ResonancePoint, solve_linear
from .nonlinear import Branch, NonlinearConfig, continue_branch

__all__ = [
    "__version__",
    "DomainSpec",
    "Mesh",
    "build_mesh",
    "SpectralPair",
    "top_eigenpairs",
    "ResonancePoint",
    "solve_linear",
    "Branch",
    "NonlinearConfig",
    "continue_branch",
]
