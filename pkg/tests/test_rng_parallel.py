"""Seed substreams and the shared thread-pool helpers."""
import os
import threading
import time

import numpy as np
import pytest

from rntk.parallel import thread_map, worker_count
from rntk.rng import derive_seed, substream


def test_substream_is_deterministic():
    a = substream(7, "trials", 3).standard_normal(4)
    b = substream(7, "trials", 3).standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_substreams_are_distinct():
    draws = {
        name: substream(7, name, 0).standard_normal(4).tobytes()
        for name in ("kernel-mc", "trials", "init", "windows")
    }
    assert len(set(draws.values())) == len(draws)
    assert substream(7, "trials", 0).standard_normal(4).tobytes() != \
        substream(7, "trials", 1).standard_normal(4).tobytes()
    assert substream(7, "trials", 0).standard_normal(4).tobytes() != \
        substream(8, "trials", 0).standard_normal(4).tobytes()


def test_derive_seed_properties():
    s = derive_seed(7, "init", 64)
    assert isinstance(s, int) and s >= 0
    assert s == derive_seed(7, "init", 64)
    assert s != derive_seed(7, "init", 65)
    assert derive_seed(7, "init") != derive_seed(7, "trials")


def test_worker_count_respects_env(monkeypatch):
    cpus = os.cpu_count() or 1
    monkeypatch.setenv("RNTK_THREADS", "2")
    assert worker_count() == min(cpus, 2)
    monkeypatch.setenv("RNTK_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("RNTK_THREADS", str(cpus + 5))
    assert worker_count() == cpus  # the env var can only tighten the cap
    monkeypatch.delenv("RNTK_THREADS")
    assert worker_count() >= 1


def test_worker_count_rejects_garbage(monkeypatch):
    monkeypatch.setenv("RNTK_THREADS", "many")
    with pytest.raises(ValueError, match="RNTK_THREADS"):
        worker_count()


def test_thread_map_preserves_order():
    def slow_identity(i):
        time.sleep(0.002 * ((7 - i) % 3))
        return i * i

    assert thread_map(slow_identity, range(12)) == [i * i for i in range(12)]


@pytest.mark.skipif((os.cpu_count() or 1) < 2,
                    reason="pool is capped at one worker on a single-CPU host")
def test_thread_map_runs_concurrently(monkeypatch):
    monkeypatch.setenv("RNTK_THREADS", "4")
    seen = set()

    def record(i):
        seen.add(threading.get_ident())
        time.sleep(0.01)
        return i

    thread_map(record, range(8))
    assert len(seen) > 1


def test_thread_map_single_worker_stays_inline(monkeypatch):
    monkeypatch.setenv("RNTK_THREADS", "1")
    main = threading.get_ident()
    idents = thread_map(lambda i: threading.get_ident(), range(4))
    assert set(idents) == {main}


def test_thread_map_propagates_exceptions():
    def boom(i):
        if i == 2:
            raise RuntimeError("boom at 2")
        return i

    with pytest.raises(RuntimeError, match="boom at 2"):
        thread_map(boom, range(4))


def test_thread_map_empty_and_max_workers():
    assert thread_map(lambda i: i, []) == []
    assert thread_map(lambda i: i + 1, range(5), max_workers=1) == [1, 2, 3, 4, 5]
