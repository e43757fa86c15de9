import threading

import pytest

from xgfem.core.threaded import fan_out, thread_cap


def test_results_sorted_by_key():
    jobs = {key: (lambda key=key: key * key) for key in (5, 1, 3, 2, 4)}
    assert fan_out(jobs, threads=3) == [(1, 1), (2, 4), (3, 9), (4, 16), (5, 25)]


def test_single_thread_runs_inline():
    names = fan_out({'a': lambda: threading.current_thread().name}, threads=1)
    assert names == [('a', threading.current_thread().name)]


def test_empty():
    assert fan_out({}) == []


def test_first_error_in_key_order():
    def fail(message):
        raise ValueError(message)

    jobs = {1: lambda: 1, 3: lambda: fail('three'), 2: lambda: fail('two')}
    with pytest.raises(ValueError, match='two'):
        fan_out(jobs, threads=2)


def test_cap(monkeypatch):
    monkeypatch.setenv('XG_THREADS', '2')
    assert thread_cap(8) == 2
    assert thread_cap(1) == 1
    assert thread_cap() == 2


def test_cap_ignores_garbage(monkeypatch):
    monkeypatch.setenv('XG_THREADS', 'many')
    assert thread_cap(1) == 1
    assert thread_cap() >= 1
