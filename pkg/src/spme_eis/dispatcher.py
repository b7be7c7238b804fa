from __future__ import annotations

import asyncio
import logging
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence, TypeVar

from spme_eis.errors import ParameterDomainError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

EXECUTORS = ("thread", "process")


@dataclass
class Job:
    index: int
    item: Any


class JobDispatcher:
    """Lane-based runner for independent numerical jobs.

    Jobs go onto one asyncio.Queue consumed by ``workers`` lane coroutines,
    each handing its job to a thread or process pool. Results come back in
    input order whatever the completion order. With one worker every job
    runs inline on the calling thread.
    """

    def __init__(self, workers: int = 1, executor: str = "thread") -> None:
        if workers < 1:
            raise ParameterDomainError("workers", workers, "need at least one worker")
        if executor not in EXECUTORS:
            raise ParameterDomainError("executor", executor, f"expected one of {EXECUTORS}")
        self.workers = workers
        self.executor = executor

    @classmethod
    def from_settings(cls, settings) -> JobDispatcher:
        return cls(workers=settings.workers, executor=settings.executor)

    def _pool(self) -> Executor:
        if self.executor == "process":
            return ProcessPoolExecutor(max_workers=self.workers)
        return ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="spme-job")

    async def gather(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Run ``fn`` on every item; re-raises the first failure by input order."""
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]

        queue: asyncio.Queue[Job] = asyncio.Queue()
        for k, item in enumerate(items):
            queue.put_nowait(Job(index=k, item=item))
        results: list[Any] = [None] * len(items)
        failures: dict[int, BaseException] = {}

        with self._pool() as pool:
            lanes = [
                asyncio.create_task(self._worker(queue, pool, fn, results, failures, f"lane-{k}"))
                for k in range(min(self.workers, len(items)))
            ]
            try:
                await queue.join()
            finally:
                for lane in lanes:
                    lane.cancel()
                await asyncio.gather(*lanes, return_exceptions=True)

        if failures:
            first = min(failures)
            logger.info("--- [DISPATCH] %d of %d job(s) failed ---", len(failures), len(items))
            raise failures[first]
        return results

    async def _worker(
        self,
        queue: asyncio.Queue[Job],
        pool: Executor,
        fn: Callable[[Any], Any],
        results: list[Any],
        failures: dict[int, BaseException],
        lane_name: str,
    ) -> None:
        """Pull jobs and run them one at a time within this lane."""
        loop = asyncio.get_running_loop()
        while True:
            job = await queue.get()
            try:
                results[job.index] = await loop.run_in_executor(pool, fn, job.item)
            except Exception as exc:
                logger.exception("Error processing job %d in %s", job.index, lane_name)
                failures[job.index] = exc
            finally:
                queue.task_done()

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Blocking wrapper around :meth:`gather`."""
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        return asyncio.run(self.gather(fn, items))
