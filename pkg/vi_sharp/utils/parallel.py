from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from loguru import logger

from vi_sharp.core.config import settings
from vi_sharp.utils.decorators import timing_decorator


class ThreadedMap:
    """Thread-based map of a pure function over a list of items.

    Results come back in input order. A failing item is logged and recorded in
    ``errors``; ``map`` re-raises the first failure unless ``raise_errors`` is off.
    """

    def __init__(self, num_threads: Optional[int] = None):
        """Initialize with optional thread count."""
        # None means settings.DEFAULT_THREAD_COUNT (cpu count - 1, minimum 1)
        if num_threads is None:
            self.num_threads = settings.DEFAULT_THREAD_COUNT
        else:
            self.num_threads = max(1, num_threads)
        self.errors: Dict[int, Exception] = {}

    def _process_item(
        self, func: Callable[[Any], Any], index: int, item: Any, total: int
    ) -> Tuple[int, Any, Optional[Exception]]:
        try:
            result = func(item)
            logger.debug(f"Processed item {index + 1}/{total}")
            return index, result, None
        except Exception as e:
            logger.warning(f"Error processing item {index + 1}/{total}: {e}")
            return index, None, e

    @timing_decorator
    def map(
        self, func: Callable[[Any], Any], items: Iterable[Any], raise_errors: bool = True
    ) -> List[Any]:
        items = list(items)
        results: List[Any] = [None] * len(items)
        self.errors = {}

        logger.debug(f"Mapping {len(items)} items using {self.num_threads} threads...")

        with ThreadPoolExecutor(max_workers=self.num_threads) as executor:
            future_to_index = {
                executor.submit(self._process_item, func, index, item, len(items)): index
                for index, item in enumerate(items)
            }

            for future in future_to_index:
                index, result, error = future.result()
                results[index] = result
                if error is not None:
                    self.errors[index] = error

        if self.errors and raise_errors:
            raise self.errors[min(self.errors)]
        return results
