"""Toeplitz and partial circulant Johnson-Lindenstrauss embeddings, with exact oracles for their tails."""

from .core import EmbeddingSpec, InvalidArgument, Kind, ResourceLimit, SignSequence, TailEstimate, derive_stream
from .estimator import allpairs_experiment, estimate_tail, hard_tail, min_m_for, scaling_sweep
from .instances import hard_family, hard_vector, shift_vector, touched_indices
from .transforms import embed, realize, toeplitz_apply_fft, toeplitz_apply_naive

__all__ = [
    "EmbeddingSpec", "InvalidArgument", "Kind", "ResourceLimit", "SignSequence", "TailEstimate", "derive_stream",
    "allpairs_experiment", "estimate_tail", "hard_tail", "min_m_for", "scaling_sweep",
    "hard_family", "hard_vector", "shift_vector", "touched_indices",
    "embed", "realize", "toeplitz_apply_fft", "toeplitz_apply_naive",
]
