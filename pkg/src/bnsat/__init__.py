"""Bayesian network structure learning by weighted MAX-SAT local search."""

__version__ = "0.1.0"

from .dataset import Dataset, VariableDecl, ingest_csv, project
from .bif import BayesNet, parse_bif, forward_sample, true_score, target_network
from .scoring import ScoreTable, enumerate_scores, family_score, log_h
from .pruning import prune
from .encoder import AtomMap, Wcnf, encode, emit_wcnf, parse_wcnf
from .solver import SolverConfig, solve, check_cost, baseline_config, long_config
from .decoder import LearnedStructure, decode, compare
from .bma import SearchRecord, harvest, estimate, compare_runs

__all__ = [
    "Dataset", "VariableDecl", "ingest_csv", "project",
    "BayesNet", "parse_bif", "forward_sample", "true_score", "target_network",
    "ScoreTable", "enumerate_scores", "family_score", "log_h",
    "prune",
    "AtomMap", "Wcnf", "encode", "emit_wcnf", "parse_wcnf",
    "SolverConfig", "solve", "check_cost", "baseline_config", "long_config",
    "LearnedStructure", "decode", "compare",
    "SearchRecord", "harvest", "estimate", "compare_runs",
]
