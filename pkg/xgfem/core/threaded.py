import os
from queue import Empty, Queue
from threading import Thread
from typing import Callable, Hashable

from xgfem.core.xg_debug import logger

"""
Independent study jobs run on worker threads
"""


def thread_cap(threads: int | None = None) -> int:
    """
    Number of workers: the requested count, capped by XG_THREADS (default: CPU count).
    """
    env = os.environ.get('XG_THREADS')
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            logger.warning('Ignoring non-integer XG_THREADS=' + env)
    return max(1, min(threads or cap, cap))


class ThreadedJob(Thread):
    """
    Takes (key, callable) pairs from the task queue until it is empty and puts (key, result, error) on q.
    """

    def __init__(self, tasks: Queue, q: Queue):
        super().__init__(daemon=True)
        self.tasks = tasks
        self.q = q

    def run(self):
        while True:
            try:
                key, func = self.tasks.get_nowait()
            except Empty:
                return
            try:
                self.q.put((key, func(), None))
            except Exception as e:  # re-raised by fan_out
                logger.debug('Job ' + str(key) + ' failed: ' + repr(e))
                self.q.put((key, None, e))


def fan_out(jobs: dict[Hashable, Callable[[], object]], threads: int | None = None) -> list[tuple[Hashable, object]]:
    """
    Run every job and wait for all of them.
    :return: (key, result) pairs sorted by key
    :raises: the exception of the first failed job in key order
    """
    if not jobs:
        return []
    n = min(thread_cap(threads), len(jobs))
    tasks, q = Queue(), Queue()
    for key, func in jobs.items():
        tasks.put((key, func))
    if n == 1:
        ThreadedJob(tasks, q).run()
    else:
        workers = [ThreadedJob(tasks, q) for _ in range(n)]
        for worker in workers:
            worker.start()
        for worker in workers:
            worker.join()
    outcomes = sorted((q.get() for _ in range(len(jobs))), key=lambda item: item[0])
    for key, _, error in outcomes:
        if error is not None:
            logger.error('Job ' + str(key) + ' failed: ' + str(error))
            raise error
    logger.debug('Finished ' + str(len(jobs)) + ' jobs on ' + str(n) + ' threads')
    return [(key, result) for key, result, _ in outcomes]
