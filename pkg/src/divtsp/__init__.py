"""Diverse TSP tour pools from an entropy-regularized spanning-tree policy."""

__version__ = "0.1.0"

from .construction import Tour, christofides_variant, randomized_double_tree
from .dispersion import SolutionPool, cost_filter, greedy_select, jaccard, pairwise_stats
from .instance import Instance, load_instance, parse_tsplib, random_instance
from .policy import GraphPointerPolicy, Matching, SpanningTree, load_checkpoint, save_checkpoint
from .reference import ReferenceCost, resolve_reference
from .training import TrainConfig, train
from .estimators import DiverseTourGenerator, DiverseTourSelector

__all__ = [
    "DiverseTourGenerator",
    "DiverseTourSelector",
    "GraphPointerPolicy",
    "Instance",
    "Matching",
    "ReferenceCost",
    "SolutionPool",
    "SpanningTree",
    "Tour",
    "TrainConfig",
    "christofides_variant",
    "cost_filter",
    "greedy_select",
    "jaccard",
    "load_checkpoint",
    "load_instance",
    "pairwise_stats",
    "parse_tsplib",
    "random_instance",
    "randomized_double_tree",
    "resolve_reference",
    "save_checkpoint",
    "train",
]
