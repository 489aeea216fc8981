"""Decentralized consensus optimization over directed graphs: ExtraPush and friends."""
from .graph import (DirectedGraph, MixingMatrix, StationaryDistribution, build_out_degree_mixing,
                    is_strongly_connected, load_graph, load_mixing, five_node_graph,
                    five_node_mixing, stationary_distribution)
from .kernels import BACKEND
from .objective import (AverageConsensus, Huber, HuberData, LeastSquares, LeastSquaresData,
                        generate_experiment, grad_stack)
from .solver import (AlgorithmConfig, InverseSqrtSchedule, TrajectoryRecord, run_algorithm,
                     run_extra, run_extrapush, run_normalized_extrapush, run_normalized_x_form,
                     run_normalized_z_form, run_subgradient_push)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig", "AverageConsensus", "BACKEND", "DirectedGraph", "Huber", "HuberData",
    "InverseSqrtSchedule", "LeastSquares", "LeastSquaresData", "MixingMatrix",
    "StationaryDistribution", "TrajectoryRecord", "build_out_degree_mixing",
    "generate_experiment", "grad_stack", "is_strongly_connected", "load_graph", "load_mixing",
    "five_node_graph", "five_node_mixing", "run_algorithm", "run_extra", "run_extrapush",
    "run_normalized_extrapush", "run_normalized_x_form", "run_normalized_z_form",
    "run_subgradient_push", "stationary_distribution",
]
