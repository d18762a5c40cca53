"""Microarchitectural components of the formal machine.

Everything here is deterministic and exposes its adversary-visible state as
a plain tuple, so projections can be compared across runs.
"""

from __future__ import annotations


class LruSet:
    """A fully associative LRU set of addresses (a cache's metadata).

    `access` is a pure hit/miss predicate; `update` performs the LRU
    insertion/promotion. The machine calls both on every touch, so a miss
    becomes a hit on the next access.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lines: list[int] = []  # MRU first

    def access(self, addr: int) -> bool:
        return addr in self._lines

    def update(self, addr: int) -> None:
        if addr in self._lines:
            self._lines.remove(addr)
        self._lines.insert(0, addr)
        del self._lines[self.capacity:]

    def state(self) -> tuple[int, ...]:
        return tuple(self._lines)

    def copy(self) -> "LruSet":
        c = LruSet(self.capacity)
        c._lines = list(self._lines)
        return c


class Scheduler:
    """Deterministic three-phase rotation: commit, execute, fetch.

    next() names the current phase's directive; update() advances the
    rotation. The buffer argument is accepted for signature compatibility
    but ignored: scheduling never depends on data.
    """

    PHASES = ("commit", "execute", "fetch")

    def __init__(self):
        self._idx = 0

    def next(self) -> str:
        return self.PHASES[self._idx]

    def update(self, buf=None) -> None:
        self._idx = (self._idx + 1) % len(self.PHASES)

    def state(self) -> tuple[int]:
        return (self._idx,)


class DirectionPredictor:
    """Per-pc two-bit saturating counters, weakly-taken initial state.

    kind 'always-taken' ignores the counters. Only conditional branches
    are predicted; the baseline machine resolves calls statically and
    stalls returns.
    """

    def __init__(self, kind: str = "twobit"):
        if kind not in ("twobit", "always-taken"):
            raise ValueError(f"unknown predictor kind {kind!r}")
        self.kind = kind
        self.counters: dict[int, int] = {}

    def predict_taken(self, pc: int) -> bool:
        if self.kind == "always-taken":
            return True
        return self.counters.get(pc, 2) >= 2

    def update(self, pc: int, taken: bool) -> None:
        if self.kind == "always-taken":
            return
        c = self.counters.get(pc, 2)
        self.counters[pc] = min(3, c + 1) if taken else max(0, c - 1)

    def state(self) -> tuple:
        return (self.kind, tuple(sorted(self.counters.items())))
