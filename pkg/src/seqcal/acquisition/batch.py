"""Constant-liar batch construction."""

import numpy as np
import structlog

from seqcal.acquisition.criteria import resolve_kind, score_candidates
from seqcal.core.models import AcquisitionKind, AcquisitionSpec, LiarRule
from seqcal.core.problem import CalibrationProblem, sample_uniform
from seqcal.emulator.gp import GpPosterior

logger = structlog.get_logger()


def liar_value(rule: LiarRule, outputs: np.ndarray) -> float:
    """Constant output imputed for picks that are still pending."""
    match rule:
        case LiarRule.MEAN:
            return float(np.mean(outputs))
        case LiarRule.MIN:
            return float(np.min(outputs))
        case LiarRule.MAX:
            return float(np.max(outputs))
    raise ValueError(f"unknown liar rule {rule}")


def build_batch(
    spec: AcquisitionSpec,
    gp: GpPosterior,
    problem: CalibrationProblem,
    stage: int,
    batch_size: int,
    seed: int | np.random.Generator,
    delta: float,
    theta_ref: np.ndarray | None = None,
    liar: float | None = None,
) -> np.ndarray:
    """Select ``batch_size`` parameter vectors for ``stage``.

    Each pick scores a fresh uniform candidate list, then the working emulator
    is conditioned on (pick, liar) with hyperparameters frozen. RND picks are
    plain uniform draws from the candidate stream.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1 (got {batch_size})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kind = resolve_kind(spec, stage)
    if kind is AcquisitionKind.RND:
        return sample_uniform(problem.space, batch_size, rng)

    liar = liar if liar is not None else liar_value(spec.liar, gp.outputs)
    working = gp
    picks: list[np.ndarray] = []
    for i in range(batch_size):
        candidates = sample_uniform(problem.space, spec.candidate_count, rng)
        index = score_candidates(spec, working, problem, stage, candidates, delta, theta_ref)
        picks.append(candidates[index])
        if i < batch_size - 1:
            working = working.condition(candidates[index][None, :], [liar])
    logger.debug(
        "batch_built",
        stage=stage,
        criterion=kind.value,
        size=batch_size,
        liar=liar,
    )
    return np.vstack(picks)
