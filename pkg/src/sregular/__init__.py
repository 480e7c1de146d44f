"""Spectra of S-regular graphs and matrices, and their tree limits."""

from .quotient import (QuotientError, QuotientSpec, load_spec, save_spec, validate_quotient,
                       balance_solution, minimal_cell_sizes, quotient_eigen)
from .graphs import (PartitionedGraph, construct_deterministic, sample_configuration_model,
                     check_s_regular, coarsest_equitable_partition)
from .matrices import assemble, classify, preset_weights
from .treewalks import walk_recurrence, brute_force_tree_walks, density_curve, stieltjes, evaluate_gf

__all__ = [
    "QuotientError", "QuotientSpec", "load_spec", "save_spec", "validate_quotient",
    "balance_solution", "minimal_cell_sizes", "quotient_eigen",
    "PartitionedGraph", "construct_deterministic", "sample_configuration_model",
    "check_s_regular", "coarsest_equitable_partition",
    "assemble", "classify", "preset_weights",
    "walk_recurrence", "brute_force_tree_walks", "density_curve", "stieltjes", "evaluate_gf",
]
