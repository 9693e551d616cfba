"""Simulation and analysis of energy-time entangled photon pairs from a Purcell-coupled atom."""

__version__ = "0.1.0"

from .physpar import SystemParams  # noqa: E402

__all__ = ["SystemParams", "__version__"]
