"""Byzantine-resilient non-Bayesian learning over directed networks."""

from .geometry import TverbergError, TverbergResult, in_convex_hull, tverberg_point, verify_tverberg
from .observation import LikelihoodModel, StateSpace, check_global_identifiability
from .protocol import AdversaryStrategy, World, aggregate, step_round
from .topology import DirectedGraph, Scenario, enumerate_reduced_graphs, source_components

__version__ = "0.1.0"

__all__ = [
    "AdversaryStrategy",
    "DirectedGraph",
    "LikelihoodModel",
    "Scenario",
    "StateSpace",
    "TverbergError",
    "TverbergResult",
    "World",
    "aggregate",
    "check_global_identifiability",
    "enumerate_reduced_graphs",
    "in_convex_hull",
    "source_components",
    "step_round",
    "tverberg_point",
    "verify_tverberg",
]
