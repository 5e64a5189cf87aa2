"""Blockwise singular value decomposition of large sparse matrices."""
from .baseline import EconomySVD, economy_svd_gram, svd_dense
from .driver import DecomposeResult, RunConfig, baseline, compare, decompose
from .matrix import SparseTriplets, parse_triplets, read_triplets
from .synthetic import gen_synthetic

__all__ = [
    "DecomposeResult",
    "EconomySVD",
    "RunConfig",
    "SparseTriplets",
    "baseline",
    "compare",
    "decompose",
    "economy_svd_gram",
    "gen_synthetic",
    "parse_triplets",
    "read_triplets",
    "svd_dense",
]
