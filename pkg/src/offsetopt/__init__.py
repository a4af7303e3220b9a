"""Traffic signal offset optimization by chordal semidefinite relaxation."""

from ._jit import JIT_ENABLED
from .generators import generate
from .netmodel import Link, TrafficNetwork, build_objective, load_network, save_network
from .pipeline import PipelineOptions, PipelineResult, solve_network

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED",
    "Link",
    "PipelineOptions",
    "PipelineResult",
    "TrafficNetwork",
    "build_objective",
    "generate",
    "load_network",
    "save_network",
    "solve_network",
]
