"""Two-dimensional Coulomb gas: sampler, exact oracles, estimators and checks."""

from .errors import Coulomb2DError
from .potential import PotentialSpec, build_induced, ginibre

__all__ = ["Coulomb2DError", "PotentialSpec", "build_induced", "ginibre"]
