"""Trace stores: the stateful backend behind the risk engine.

Every store answers windowed counts over the half-open interval
``(now - window, now]`` and keeps a per-agent cooldown deadline. History
is append-only; nothing here ever removes a recorded event.
"""

from __future__ import annotations

import threading
import time
from abc import ABC, abstractmethod
from bisect import bisect_right, insort
from collections import Counter, defaultdict
from typing import Callable

READ_METHODS = ("cooldown_active", "count_requests", "count_denials", "count_pattern")
WRITE_METHODS = ("add_request", "add_denial", "add_pattern", "set_cooldown")


class StoreError(RuntimeError):
    """A backend call failed; callers must fail closed."""


class TraceStore(ABC):
    @abstractmethod
    def count_requests(self, agent_id: str, window: int, now: int) -> int: ...

    @abstractmethod
    def count_denials(self, agent_id: str, window: int, now: int) -> int: ...

    @abstractmethod
    def count_pattern(self, key: str, window: int, now: int) -> int: ...

    @abstractmethod
    def cooldown_active(self, agent_id: str, now: int) -> bool: ...

    @abstractmethod
    def add_request(self, agent_id: str, t: int) -> None: ...

    @abstractmethod
    def add_denial(self, agent_id: str, t: int) -> None: ...

    @abstractmethod
    def add_pattern(self, key: str, t: int) -> None: ...

    @abstractmethod
    def set_cooldown(self, agent_id: str, until: int) -> None: ...


def _count_window(stamps: list, window: int, now: int) -> int:
    return bisect_right(stamps, now) - bisect_right(stamps, now - window)


class InMemoryStore(TraceStore):
    """Process-local store guarded by a single lock.

    Timestamp lists are kept sorted so window counts are two bisections;
    results match a linear scan over the same events exactly.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._requests: dict[str, list[int]] = defaultdict(list)
        self._denials: dict[str, list[int]] = defaultdict(list)
        self._patterns: dict[str, list[int]] = defaultdict(list)
        self._cooldowns: dict[str, int] = {}

    def count_requests(self, agent_id, window, now):
        with self._lock:
            stamps = self._requests.get(agent_id)
            return _count_window(stamps, window, now) if stamps else 0

    def count_denials(self, agent_id, window, now):
        with self._lock:
            stamps = self._denials.get(agent_id)
            return _count_window(stamps, window, now) if stamps else 0

    def count_pattern(self, key, window, now):
        with self._lock:
            stamps = self._patterns.get(key)
            return _count_window(stamps, window, now) if stamps else 0

    def cooldown_active(self, agent_id, now):
        with self._lock:
            until = self._cooldowns.get(agent_id)
            return until is not None and until > now

    def add_request(self, agent_id, t):
        with self._lock:
            insort(self._requests[agent_id], t)

    def add_denial(self, agent_id, t):
        with self._lock:
            insort(self._denials[agent_id], t)

    def add_pattern(self, key, t):
        with self._lock:
            insort(self._patterns[key], t)

    def set_cooldown(self, agent_id, until):
        with self._lock:
            self._cooldowns[agent_id] = until

    def totals(self) -> dict[str, int]:
        """Total recorded events per kind, across all subjects."""
        with self._lock:
            return {
                "requests": sum(map(len, self._requests.values())),
                "denials": sum(map(len, self._denials.values())),
                "patterns": sum(map(len, self._patterns.values())),
                "cooldowns": len(self._cooldowns),
            }


class NullStore(TraceStore):
    """Stateless stand-in: every read is zero or False, writes vanish."""

    def count_requests(self, agent_id, window, now):
        return 0

    def count_denials(self, agent_id, window, now):
        return 0

    def count_pattern(self, key, window, now):
        return 0

    def cooldown_active(self, agent_id, now):
        return False

    def add_request(self, agent_id, t):
        pass

    def add_denial(self, agent_id, t):
        pass

    def add_pattern(self, key, t):
        pass

    def set_cooldown(self, agent_id, until):
        pass


class _Delegating(TraceStore):
    def __init__(self, inner: TraceStore) -> None:
        self.inner = inner

    def _call(self, name: str, *args):
        return getattr(self.inner, name)(*args)

    def count_requests(self, agent_id, window, now):
        return self._call("count_requests", agent_id, window, now)

    def count_denials(self, agent_id, window, now):
        return self._call("count_denials", agent_id, window, now)

    def count_pattern(self, key, window, now):
        return self._call("count_pattern", key, window, now)

    def cooldown_active(self, agent_id, now):
        return self._call("cooldown_active", agent_id, now)

    def add_request(self, agent_id, t):
        return self._call("add_request", agent_id, t)

    def add_denial(self, agent_id, t):
        return self._call("add_denial", agent_id, t)

    def add_pattern(self, key, t):
        return self._call("add_pattern", key, t)

    def set_cooldown(self, agent_id, until):
        return self._call("set_cooldown", agent_id, until)


class DelayedStore(_Delegating):
    """Blocks for ``delay_per_call`` seconds before every delegated call."""

    def __init__(self, inner: TraceStore, delay_per_call: float) -> None:
        if delay_per_call < 0:
            raise ValueError("delay_per_call must be >= 0")
        super().__init__(inner)
        self.delay_per_call = delay_per_call

    def _call(self, name, *args):
        if self.delay_per_call > 0:
            time.sleep(self.delay_per_call)
        return super()._call(name, *args)


class InstrumentedStore(_Delegating):
    """Counts calls per contract method."""

    def __init__(self, inner: TraceStore) -> None:
        super().__init__(inner)
        self._lock = threading.Lock()
        self.calls: Counter[str] = Counter()

    def _call(self, name, *args):
        with self._lock:
            self.calls[name] += 1
        return super()._call(name, *args)

    def reads(self) -> dict[str, int]:
        with self._lock:
            return {m: self.calls[m] for m in READ_METHODS}

    def writes(self) -> dict[str, int]:
        with self._lock:
            return {m: self.calls[m] for m in WRITE_METHODS}

    def reset(self) -> None:
        with self._lock:
            self.calls.clear()


class FaultyStore(_Delegating):
    """Raises StoreError on selected methods; used for fail-closed checks."""

    def __init__(self, inner: TraceStore, fail_on: Callable[[str], bool] | None = None) -> None:
        super().__init__(inner)
        self.fail_on = fail_on or (lambda name: True)

    def _call(self, name, *args):
        if self.fail_on(name):
            raise StoreError(f"injected failure in {name}")
        return super()._call(name, *args)


def make_instrumented(inner: TraceStore) -> InstrumentedStore:
    return InstrumentedStore(inner)
