"""Minimal weighted dbar solutions on the disk, summed over a Fuchsian deck group."""

from .correction import correction_solve, metric_perturbation, restricted_vs_global
from .dbar import PerturbedWeight, WeightSpec, bergman_project, cauchy_transform, minimal_solution
from .decksum import ConstantsReport, DeckSumSolver, LeafSolution, ProblemSpec, corpus
from .exceptions import ConfigError, DomainError, NumericalCheckError
from .fuchsian import SuspensionModel, SurfaceGroup, enumerate_deck, octagon_generators
from .grid import Grid, GridField
from .hyperbolic import MobiusTransform, annulus_index, poincare_distance, verify_disk_lemmas
from .partition import RectangleIndex, partition_values, tilde_chi

__all__ = [
    "ConfigError",
    "ConstantsReport",
    "DeckSumSolver",
    "DomainError",
    "Grid",
    "GridField",
    "LeafSolution",
    "MobiusTransform",
    "NumericalCheckError",
    "PerturbedWeight",
    "ProblemSpec",
    "RectangleIndex",
    "SurfaceGroup",
    "SuspensionModel",
    "WeightSpec",
    "annulus_index",
    "bergman_project",
    "cauchy_transform",
    "correction_solve",
    "corpus",
    "enumerate_deck",
    "metric_perturbation",
    "minimal_solution",
    "octagon_generators",
    "partition_values",
    "poincare_distance",
    "restricted_vs_global",
    "tilde_chi",
    "verify_disk_lemmas",
]
