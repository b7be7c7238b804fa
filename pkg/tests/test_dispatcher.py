import logging
import threading
import time

import pytest

from spme_eis.config import Settings
from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import ParameterDomainError


def _slow_square(x):
    # later items finish first
    time.sleep(0.02 * (5 - x))
    return x * x


def _fail_on(bad):
    def fn(x):
        if x in bad:
            raise ValueError(f"bad item {x}")
        return x
    return fn


# ---------------------------------------------------------------------------
# Ordering and inline execution
# ---------------------------------------------------------------------------


async def test_gather_keeps_input_order():
    dispatcher = JobDispatcher(workers=3)
    assert await dispatcher.gather(_slow_square, range(5)) == [0, 1, 4, 9, 16]


def test_map_keeps_input_order():
    assert JobDispatcher(workers=4).map(_slow_square, [4, 0, 2]) == [16, 0, 4]


def test_single_worker_runs_inline():
    caller = threading.get_ident()
    seen = JobDispatcher(workers=1).map(lambda _: threading.get_ident(), range(3))
    assert seen == [caller] * 3


def test_jobs_run_off_thread_with_workers():
    caller = threading.get_ident()
    seen = JobDispatcher(workers=2).map(lambda _: threading.get_ident(), range(4))
    assert caller not in seen


def test_empty_input():
    assert JobDispatcher(workers=2).map(_slow_square, []) == []


# ---------------------------------------------------------------------------
# Failures
# ---------------------------------------------------------------------------


def test_first_failure_by_index_is_raised(caplog):
    dispatcher = JobDispatcher(workers=3)
    with caplog.at_level(logging.ERROR, logger="spme_eis.dispatcher"):
        with pytest.raises(ValueError, match="bad item 1"):
            dispatcher.map(_fail_on({1, 3}), range(5))
    assert sum("Error processing job" in r.message for r in caplog.records) == 2


def test_inline_failure_propagates():
    with pytest.raises(ValueError):
        JobDispatcher(workers=1).map(_fail_on({0}), [0])


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [{"workers": 0}, {"executor": "fiber"}])
def test_invalid_arguments(kwargs):
    with pytest.raises(ParameterDomainError):
        JobDispatcher(**kwargs)


def test_from_settings(monkeypatch):
    monkeypatch.setenv("SPME_WORKERS", "3")
    monkeypatch.setenv("SPME_EXECUTOR", "process")
    dispatcher = JobDispatcher.from_settings(Settings(_env_file=None))
    assert (dispatcher.workers, dispatcher.executor) == (3, "process")
