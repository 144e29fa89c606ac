"""Injectable time sources.

The orchestrator never calls ``time`` or ``asyncio.sleep`` directly; it goes
through a :class:`Clock`.  Under a normal event loop the clock is wall time.
Under :class:`VirtualTimeLoop` the same code runs against a simulated clock
that only advances when every task is blocked on a timer, so throughput and
backoff behaviour can be asserted exactly and instantly.
"""

from __future__ import annotations

import asyncio
import selectors
import time
from typing import Any, Callable, Coroutine, TypeVar

T = TypeVar("T")


class Clock:
    """Time source bound to the running event loop."""

    def now(self) -> float:
        """Monotonic seconds on the loop's timeline."""
        return asyncio.get_running_loop().time()

    async def sleep(self, delay: float) -> None:
        await asyncio.sleep(max(0.0, delay))

    def wall_time(self) -> float:
        """Seconds since the epoch, used only for human-facing timestamps."""
        return time.time()


class SimulatedClock(Clock):
    """Clock for runs under :class:`VirtualTimeLoop`.

    Timestamps count from a virtual epoch of zero so that artifacts produced
    by simulated runs are reproducible byte for byte.
    """

    def wall_time(self) -> float:
        return self.now()


class _VirtualSelector(selectors.SelectSelector):
    """Selector that never blocks; it advances the owning loop instead."""

    def __init__(self, advance: Callable[[float], None]) -> None:
        super().__init__()
        self._advance = advance

    def select(self, timeout: float | None = None) -> list:
        if timeout is None:
            # Every task is waiting on I/O or an unreachable event: with a
            # virtual clock this can never resolve, so fail loudly.
            raise RuntimeError(
                "virtual time stalled: all tasks blocked with no scheduled timer"
            )
        if timeout > 0:
            self._advance(timeout)
        return []


class VirtualTimeLoop(asyncio.SelectorEventLoop):
    """Event loop whose ``time()`` jumps straight to the next scheduled timer.

    All coordination in the pipeline is cooperative (semaphores, locks and
    timer sleeps), so running under this loop preserves ordering while making
    sleeps free.  Real network I/O would dead-stall by design; simulated runs
    must use in-process backends.
    """

    def __init__(self) -> None:
        self._virtual_now = 0.0
        super().__init__(_VirtualSelector(self._advance))
        self._clock_resolution = 1e-9

    def _advance(self, delta: float) -> None:
        self._virtual_now += delta

    def time(self) -> float:
        return self._virtual_now


def run_simulated(coro: Coroutine[Any, Any, T]) -> T:
    """Run ``coro`` to completion on a fresh virtual-time loop."""
    loop = VirtualTimeLoop()
    try:
        return loop.run_until_complete(coro)
    finally:
        loop.close()
