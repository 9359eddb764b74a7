"""Geometric semantic genetic programming for symbolic regression.

Populations evolve as columns of a semantics table plus an ancestry store;
explicit expressions are rebuilt only on request after the run.
"""

__version__ = "0.1.0"

from .expr import ExprTree, evaluate, eval_case, parse, render, random_tree, ramped_half_and_half
from .engine import RunConfig, RunTrace, run, rmse
from .baseline import StdGpConfig, run_std
from .dataio import Dataset, SplitDataset, load, split
from .reconstruct import ReconstructionContext, unwind, expected_size, simplify
from .stats import median, wilcoxon_rank_sum, box_summary

__all__ = [
    "ExprTree", "evaluate", "eval_case", "parse", "render", "random_tree", "ramped_half_and_half",
    "RunConfig", "RunTrace", "run", "rmse", "StdGpConfig", "run_std",
    "Dataset", "SplitDataset", "load", "split",
    "ReconstructionContext", "unwind", "expected_size", "simplify",
    "median", "wilcoxon_rank_sum", "box_summary",
]
