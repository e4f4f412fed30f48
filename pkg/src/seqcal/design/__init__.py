"""Batched sequential design over an in-process worker pool."""

from seqcal.design.engine import initial_design, run_design
from seqcal.design.workers import Completion, WorkerPool

__all__ = ["Completion", "WorkerPool", "initial_design", "run_design"]
