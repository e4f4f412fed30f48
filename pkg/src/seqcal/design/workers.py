"""In-process worker pool reporting completions through a queue."""

import queue
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import structlog

logger = structlog.get_logger()


@dataclass
class Completion:
    """A finished simulator call."""

    job_id: int
    theta: np.ndarray
    submit_time: float
    complete_time: float
    output: float | None = None
    error: BaseException | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class WorkerPool:
    """``workers`` evaluation slots running one simulator call each.

    Completions are pushed onto a channel. ``collect`` hands out the ones that
    finished first, by completion time with ties broken by job id. A collected
    group is returned sorted by job id.
    """

    def __init__(
        self,
        evaluate: Callable[[np.ndarray], float],
        workers: int,
        clock: Callable[[], float] = time.monotonic,
    ):
        if workers < 1:
            raise ValueError(f"worker count must be >= 1 (got {workers})")
        self._evaluate = evaluate
        self._workers = workers
        self._clock = clock
        self._origin = clock()
        self._executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="seqcal-worker")
        self._channel: queue.Queue[Completion] = queue.Queue()
        self._ready: list[Completion] = []
        self._in_flight = 0

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def pending(self) -> int:
        """Jobs submitted and not yet handed out by ``collect``."""
        return self._in_flight + len(self._ready)

    def elapsed(self) -> float:
        return self._clock() - self._origin

    def _run(self, job_id: int, theta: np.ndarray, submitted: float) -> None:
        try:
            output = self._evaluate(theta)
            completion = Completion(job_id, theta, submitted, self.elapsed(), output=output)
        except BaseException as e:  # reported to the coordinator, never raised in a worker
            completion = Completion(job_id, theta, submitted, self.elapsed(), error=e)
        self._channel.put(completion)

    def submit(self, job_id: int, theta: np.ndarray) -> None:
        if self.pending >= self._workers:
            raise RuntimeError(f"all {self._workers} workers are busy")
        self._in_flight += 1
        self._executor.submit(self._run, job_id, np.array(theta, dtype=float), self.elapsed())

    def _take(self, block: bool) -> bool:
        try:
            completion = self._channel.get(block=block)
        except queue.Empty:
            return False
        self._in_flight -= 1
        self._ready.append(completion)
        return True

    def collect(self, count: int) -> list[Completion]:
        """Block until ``count`` completions are available and return the earliest."""
        if not 1 <= count <= self.pending:
            raise ValueError(f"cannot collect {count} of {self.pending} pending jobs")
        while self._take(block=False):
            pass
        while len(self._ready) < count:
            self._take(block=True)
        self._ready.sort(key=lambda c: (c.complete_time, c.job_id))
        taken, self._ready = self._ready[:count], self._ready[count:]
        return sorted(taken, key=lambda c: c.job_id)

    def close(self) -> None:
        self._executor.shutdown(wait=True, cancel_futures=True)

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
