import threading

from app.workers import get_executor, run_parallel, shutdown_executor


def test_run_parallel_preserves_order():
    items = list(range(20))
    assert run_parallel(lambda x: x * x, items, threads=4) == [x * x for x in items]
    shutdown_executor()


def test_single_thread_runs_inline():
    names = run_parallel(lambda _: threading.current_thread().name, [0, 1, 2], threads=1)
    assert set(names) == {threading.current_thread().name}


def test_executor_is_reused_until_resized():
    first = get_executor(2)
    assert get_executor(2) is first
    assert get_executor(3) is not first
    shutdown_executor()
