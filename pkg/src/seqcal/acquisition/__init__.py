"""Acquisition criteria and batch construction."""

from seqcal.acquisition.batch import build_batch, liar_value
from seqcal.acquisition.criteria import (
    acquisition_values,
    eivar,
    eivar_terms,
    expected_unimprovement,
    hybrid_dispatch,
    prob_improvement,
    resolve_kind,
    score_candidates,
)

__all__ = [
    "acquisition_values",
    "build_batch",
    "eivar",
    "eivar_terms",
    "expected_unimprovement",
    "hybrid_dispatch",
    "liar_value",
    "prob_improvement",
    "resolve_kind",
    "score_candidates",
]
