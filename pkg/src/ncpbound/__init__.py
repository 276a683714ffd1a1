"""Certified lower bounds on the network community profile.

The bound side solves a rank-constrained SDP relaxation of mu-conductance
and certifies it with one extreme eigenvalue; the upper side samples sets
with seeded PageRank sweeps.
"""

__version__ = "0.1.0"

from .certify import CertifiedBound, ProfileLowerBound, certify, envelope_from_bounds, lower_bound, monotone_envelope
from .graph import (
    DisconnectedGraphError,
    Graph,
    GraphError,
    VertexSet,
    conductance,
    largest_connected_component,
    load_edge_list,
)
from .lrsdp import AlmConfig, MuProblem, alm_solve

__all__ = [
    "AlmConfig",
    "CertifiedBound",
    "DisconnectedGraphError",
    "Graph",
    "GraphError",
    "MuProblem",
    "ProfileLowerBound",
    "VertexSet",
    "alm_solve",
    "certify",
    "conductance",
    "envelope_from_bounds",
    "largest_connected_component",
    "load_edge_list",
    "lower_bound",
    "monotone_envelope",
]
