from concurrent.futures import ThreadPoolExecutor
import os

from .constants import THREADS_ENV
from .exceptions import ConfigError


def available_threads():
    return os.cpu_count() or 1


def thread_cap():
    # QSLM_THREADS caps parallelism; unset means no cap
    value = os.environ.get(THREADS_ENV)
    if value is None or value == "":
        return None
    try:
        cap = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}")
    if cap < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return cap


def resolve_threads(requested=None):
    threads = requested if requested is not None else available_threads()
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    cap = thread_cap()
    if cap is not None:
        threads = min(threads, cap)
    return threads


def ordered_map(fn, items, threads=1):
    """``[fn(item) for item in items]``, possibly computed concurrently.

    Results come back in input order whatever order they finish in. The first
    exception raised by ``fn`` (in input order) propagates.

    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def parse_int_list(text):
    """``"16,14,12"`` -> ``[16, 14, 12]``."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Expected comma-separated integers, got {text!r}")


def parse_float_list(text):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Expected comma-separated numbers, got {text!r}")
