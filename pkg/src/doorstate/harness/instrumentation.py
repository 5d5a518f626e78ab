"""Run instrumentation: wall time, traced peak memory and process usage.

Peak memory comes from tracemalloc (numpy registers its buffers with it), so
it is portable but only attributable to one run when runs execute one at a
time. The process max RSS from getrusage is reported alongside where the
platform has it.
"""
from __future__ import annotations
import sys
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

try:
    import resource
except ImportError:  # not available on Windows
    resource = None  # type: ignore[assignment]

__all__ = ["Measurement", "get_usage", "measure"]


def get_usage() -> dict[str, float]:
    """Get current resource usage of this process.

    Returns:
        Dictionary with CPU time and max RSS in KiB; empty where the
        platform has no getrusage
    """
    if resource is None:
        return {}
    usage = resource.getrusage(resource.RUSAGE_SELF)
    # macOS reports bytes, Linux kilobytes
    max_rss = usage.ru_maxrss / 1024 if sys.platform == "darwin" else usage.ru_maxrss
    return {
        "cpu_time": usage.ru_utime + usage.ru_stime,
        "max_rss_kb": float(max_rss),
        "page_faults": float(usage.ru_majflt),
    }


@dataclass(slots=True)
class Measurement:
    """Filled in when the ``measure`` block exits."""

    wall_time: float = 0.0
    cpu_time: float = 0.0
    peak_bytes: int = 0
    max_rss_kb: float = 0.0


@contextmanager
def measure() -> Iterator[Measurement]:
    """Measure the enclosed block.

    Starts tracemalloc if it is not already tracing and resets its peak, so
    ``peak_bytes`` is the peak traced allocation inside the block.
    """
    started_here = not tracemalloc.is_tracing()
    if started_here:
        tracemalloc.start()
    tracemalloc.reset_peak()
    before = get_usage()
    start = time.perf_counter()
    result = Measurement()
    try:
        yield result
    finally:
        result.wall_time = time.perf_counter() - start
        _, peak = tracemalloc.get_traced_memory()
        result.peak_bytes = int(peak)
        after = get_usage()
        result.cpu_time = after.get("cpu_time", 0.0) - before.get("cpu_time", 0.0)
        result.max_rss_kb = after.get("max_rss_kb", 0.0)
        if started_here:
            tracemalloc.stop()
