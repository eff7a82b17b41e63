import os
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

from loguru import logger

from src.infrastructure.settings import settings

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    _pool: Executor | None = None
    _workers: int = 1
    _ready: bool = False

    @classmethod
    def init(cls, workers: int | None = None):
        if not cls._ready:
            workers = workers or settings.THREADS or os.cpu_count() or 1
            cls._workers = max(1, int(workers))
            if cls._workers > 1:
                cls._pool = ProcessPoolExecutor(max_workers=cls._workers)
            cls._ready = True
            logger.info(f"Worker pool initialized with {cls._workers} worker(s)")

    @classmethod
    def get_pool(cls) -> Executor | None:
        """The process pool, or None when running inline."""
        if not cls._ready:
            raise RuntimeError("Worker pool not initialized")
        return cls._pool

    @classmethod
    def workers(cls) -> int:
        return cls._workers

    @classmethod
    def map(cls, fn: Callable[[T], R], items: Iterable[T], chunksize: int = 1) -> list[R]:
        """Results in input order whatever the worker count."""
        items = list(items)
        if cls._pool is None or len(items) < 2:
            return [fn(item) for item in items]
        return list(cls._pool.map(fn, items, chunksize=chunksize))

    @classmethod
    def close(cls):
        if cls._pool:
            cls._pool.shutdown()
            cls._pool = None
        if cls._ready:
            cls._ready = False
            cls._workers = 1
            logger.info("Worker pool closed")
