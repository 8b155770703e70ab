"""Multiply-accumulate instrumentation.

Numeric kernels report the exact number of scalar multiplications they
perform whenever a counter is active, so cost reports come from the real
forward code path instead of a parallel formula. The convention: one MAC
per multiply on feature data (kernel products, elementwise gates, affine
scales, weighted sums). Additions, comparisons, divisions, exponentials,
and conv bias terms contribute zero.
"""

from contextlib import contextmanager

_ACTIVE: list["MacCounter"] = []


class MacCounter:
    """Accumulates multiply-accumulate counts while registered."""

    __slots__ = ("total",)

    def __init__(self) -> None:
        self.total = 0


@contextmanager
def count_macs():
    """Activate a counter for the duration of the block.

    Nested counters each receive the counts of operations run inside them.
    """
    counter = MacCounter()
    _ACTIVE.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE.remove(counter)


def add_macs(n: int) -> None:
    """Record ``n`` multiply-accumulates on every active counter."""
    if _ACTIVE:
        n = int(n)
        for counter in _ACTIVE:
            counter.total += n
