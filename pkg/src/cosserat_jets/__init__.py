"""Second-order non-holonomic jet groupoids and material uniformity/homogeneity of Cosserat media."""

from .jets import BodyChart, Jet1, Jet2, compose2, identity2, invert2
from .material import ResponseFunction, builtin_media, register_medium

__all__ = ["BodyChart", "Jet1", "Jet2", "ResponseFunction", "builtin_media", "compose2", "identity2", "invert2", "register_medium"]
__version__ = "0.1.0"
