import functools
import time

from loguru import logger


def timing_decorator(func):
    """Decorator that logs the execution time at DEBUG level."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        end_time = time.perf_counter()
        logger.debug(f"{func.__name__} executed in {end_time - start_time:.2f} seconds")
        return result

    return wrapper
