"""Non-coherent over-the-air decentralized gradient descent simulator."""

from ncota.core import ParamDomain, SeedSpec, project, stacked_norm

__all__ = ["ParamDomain", "SeedSpec", "project", "stacked_norm"]
__version__ = "0.1.0"
