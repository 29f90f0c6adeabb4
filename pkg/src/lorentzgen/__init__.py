"""Lorentz-model hyperbolic toolkit: geometry, layers, Riemannian training,
adversarial training with geodesic gradient penalty, and random-tree
generation experiments."""

from lorentzgen.geometry import Curvature, LorentzPoint, TangentVector

__all__ = ["Curvature", "LorentzPoint", "TangentVector"]
__version__ = "0.1.0"
