"""Spatial Aloha with local leader election and PI-tuned access probabilities."""
from .analysis import rim_all, solve_nash, throughput
from .sale import RunConfig, run_ideal
from .simnet import FrameConfig, run_frames
from .topology import InterferenceGraph, build_graph, random_geometric

__all__ = [
    "FrameConfig", "InterferenceGraph", "RunConfig", "build_graph", "random_geometric",
    "rim_all", "run_frames", "run_ideal", "solve_nash", "throughput",
]
__version__ = "0.1.0"
