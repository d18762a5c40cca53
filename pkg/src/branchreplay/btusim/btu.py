"""Branch trace unit: windowed replay of compressed branch traces.

Sixteen direct-mapped entries (slot = branch_pc mod 16, full-pc tag), each
holding a pattern store, a 16-slot window over the branch's trace elements,
a committed-progress checkpoint, and a FIFO of in-flight (uncommitted)
lookups.

  lookup   serves the next speculative outcome: finds the first live window
           slot, walks the pattern to the target offset, decrements the
           speculative counters, and logs an in-flight record carrying the
           prior counter values.
  commit   retires the oldest in-flight outcome against the checkpoint;
           when the head element's committed passes hit zero the head is
           removed and the next element (cyclically, skipping nothing) is
           prefetched fresh at the tail. The end-of-trace marker wraps the
           cycle back to the first element.
  squash   undoes the youngest in-flight records by restoring their stored
           prior counters; undoing all of them lands exactly on the
           checkpoint's committed counters.
  evict    spills the checkpoint; a later fill resumes the trace at the
           spilled element and counters.

Entries with in-flight lookups are never evicted; the pipeline retries the
fill until the victim drains.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from branchreplay.core.types import (
    BranchRecord,
    CheckpointElement,
    PatternElement,
    TraceElement,
)
from branchreplay.errors import (
    CommitWithoutFetch,
    CorruptEntry,
    MissingCheckpoint,
)

NUM_ENTRIES = 16
WINDOW = 16


@dataclass(frozen=True)
class Redirect:
    """Lookup hit: steer fetch to target_pc."""

    target_pc: int


@dataclass(frozen=True)
class Stall:
    """Lookup hit but the window is speculatively exhausted; wait for
    commits to free it."""


@dataclass(frozen=True)
class Miss:
    """No entry for this branch; a fill is required."""


class _WinSlot:
    """One window slot: a live view of a trace element."""

    __slots__ = ("elem_idx", "pattern_counter", "trace_counter", "eot")

    def __init__(self, elem_idx: int, pattern_counter: int,
                 trace_counter: int, eot: bool):
        self.elem_idx = elem_idx
        self.pattern_counter = pattern_counter
        self.trace_counter = trace_counter
        self.eot = eot


class _InflightRecord:
    """Prior counters of one speculative lookup, for precise undo."""

    __slots__ = ("elem_idx", "pattern_counter", "trace_counter")

    def __init__(self, elem_idx: int, pattern_counter: int, trace_counter: int):
        self.elem_idx = elem_idx
        self.pattern_counter = pattern_counter
        self.trace_counter = trace_counter


class BtuEntry:
    """Replay state for one traced branch."""

    def __init__(self, record: BranchRecord,
                 resume: CheckpointElement | None = None):
        if not record.elements or all(e.eot for e in record.elements):
            raise CorruptEntry(f"branch {record.branch_pc:#x}: no trace elements")
        self.branch_pc = record.branch_pc
        self.store: tuple[PatternElement, ...] = record.store
        self.elements: tuple[TraceElement, ...] = record.elements
        # per-element totals and cumulative reps, for offset walks
        self._totals: list[int] = []
        self._cums: list[tuple[int, ...]] = []
        for el in record.elements:
            if el.eot:
                self._totals.append(0)
                self._cums.append(())
                continue
            cum: list[int] = []
            acc = 0
            for i in range(el.pattern_size):
                acc += record.store[el.pattern_index + i].reps
                cum.append(acc)
            self._totals.append(acc)
            self._cums.append(tuple(cum))

        n = len(record.elements)
        start = resume.trace_index if resume else 0
        if resume and (start >= n or record.elements[start].eot):
            raise CorruptEntry(
                f"branch {record.branch_pc:#x}: resume index {start} invalid"
            )
        self.window: deque[_WinSlot] = deque()
        for k in range(min(n, WINDOW)):
            idx = (start + k) % n
            el = record.elements[idx]
            self.window.append(
                _WinSlot(idx, el.pattern_counter, el.trace_counter, el.eot)
            )
        head = record.elements[start]
        if resume:
            self.window[0].pattern_counter = resume.pattern_counter
            self.window[0].trace_counter = resume.trace_counter
        self.cpt_trace_index = start
        self.cpt_pattern_counter = (
            resume.pattern_counter if resume else head.pattern_counter
        )
        self.cpt_trace_counter = (
            resume.trace_counter if resume else head.trace_counter
        )
        self.cpt_head_original = (self._totals[start], head.trace_counter)
        self.inflight: deque[_InflightRecord] = deque()
        self.lru_stamp = 0

    # -- views ---------------------------------------------------------------

    def checkpoint(self) -> CheckpointElement:
        return CheckpointElement(
            trace_index=self.cpt_trace_index,
            pattern_counter=self.cpt_pattern_counter,
            trace_counter=self.cpt_trace_counter,
            head_original=self.cpt_head_original,
        )

    def window_view(self) -> list[tuple[int, int, int]]:
        """(elem_idx, pattern_counter, trace_counter) per live slot."""
        return [
            (s.elem_idx, s.pattern_counter, s.trace_counter)
            for s in self.window
        ]

    # -- operations ------------------------------------------------------------

    def lookup(self) -> Redirect | Stall:
        """Serve the next speculative outcome."""
        slot = None
        for s in self.window:
            if not s.eot and s.trace_counter > 0:
                slot = s
                break
        if slot is None:
            return Stall()
        total = self._totals[slot.elem_idx]
        consumed = total - slot.pattern_counter
        cums = self._cums[slot.elem_idx]
        el = self.elements[slot.elem_idx]
        j = 0
        while cums[j] <= consumed:
            j += 1
        offset = self.store[el.pattern_index + j].target_offset
        self.inflight.append(
            _InflightRecord(slot.elem_idx, slot.pattern_counter,
                            slot.trace_counter)
        )
        slot.pattern_counter -= 1
        if slot.pattern_counter == 0:
            slot.trace_counter -= 1
            slot.pattern_counter = total
        return Redirect(self.branch_pc + offset)

    def commit(self) -> None:
        """Retire the oldest in-flight outcome against the checkpoint."""
        if not self.inflight:
            raise CommitWithoutFetch(
                f"branch {self.branch_pc:#x}: commit with no in-flight lookup"
            )
        self.inflight.popleft()
        self.cpt_pattern_counter -= 1
        if self.cpt_pattern_counter > 0:
            return
        self.cpt_trace_counter -= 1
        if self.cpt_trace_counter > 0:
            self.cpt_pattern_counter = self._totals[self.cpt_trace_index]
            return
        # head element fully committed: rotate it out, prefetch at the tail
        self._rotate_head()
        n = len(self.elements)
        nxt = (self.cpt_trace_index + 1) % n
        if self.elements[nxt].eot:
            nxt = (nxt + 1) % n
        self.cpt_trace_index = nxt
        self.cpt_pattern_counter = self._totals[nxt]
        self.cpt_trace_counter = self.elements[nxt].trace_counter
        self.cpt_head_original = (self._totals[nxt],
                                  self.elements[nxt].trace_counter)
        # the end-of-trace marker wraps straight through
        while self.window[0].eot:
            self._rotate_head()
        if self.window[0].elem_idx != self.cpt_trace_index:
            raise CorruptEntry(
                f"branch {self.branch_pc:#x}: window head "
                f"{self.window[0].elem_idx} != checkpoint {self.cpt_trace_index}"
            )

    def _rotate_head(self) -> None:
        """Drop the head slot, append the next trace element after the tail."""
        n = len(self.elements)
        self.window.popleft()
        tail_idx = self.window[-1].elem_idx if self.window else self.cpt_trace_index
        idx = (tail_idx + 1) % n
        el = self.elements[idx]
        self.window.append(
            _WinSlot(idx, el.pattern_counter, el.trace_counter, el.eot)
        )

    def squash(self, count: int | None = None) -> int:
        """Undo the youngest `count` in-flight lookups (all, if None).

        Returns the number undone. Restores each lookup's prior counters,
        so undoing everything lands exactly on the checkpoint state.
        """
        if count is None:
            count = len(self.inflight)
        undone = 0
        for _ in range(count):
            if not self.inflight:
                break
            rec = self.inflight.pop()
            slot = None
            for s in self.window:
                if s.elem_idx == rec.elem_idx:
                    slot = s
                    break
            if slot is None:
                raise CorruptEntry(
                    f"branch {self.branch_pc:#x}: in-flight element "
                    f"{rec.elem_idx} vanished from the window"
                )
            slot.pattern_counter = rec.pattern_counter
            slot.trace_counter = rec.trace_counter
            undone += 1
        return undone


@dataclass
class BtuStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    spills: int = 0
    resumes: int = 0


class BtuState:
    """The full unit: 16 direct-mapped entries plus spilled checkpoints."""

    def __init__(self):
        self.entries: list[BtuEntry | None] = [None] * NUM_ENTRIES
        self.spilled: dict[int, CheckpointElement] = {}
        self.stats = BtuStats()
        self._stamp = 0

    @staticmethod
    def slot_of(branch_pc: int) -> int:
        return branch_pc % NUM_ENTRIES

    def entry_for(self, branch_pc: int) -> BtuEntry | None:
        entry = self.entries[self.slot_of(branch_pc)]
        if entry is not None and entry.branch_pc == branch_pc:
            return entry
        return None

    def lookup(self, branch_pc: int) -> Redirect | Stall | Miss:
        entry = self.entry_for(branch_pc)
        if entry is None:
            self.stats.misses += 1
            return Miss()
        self.stats.hits += 1
        self._stamp += 1
        entry.lru_stamp = self._stamp
        return entry.lookup()

    def commit(self, branch_pc: int) -> None:
        entry = self.entry_for(branch_pc)
        if entry is None:
            raise CommitWithoutFetch(
                f"branch {branch_pc:#x}: commit for a branch with no entry"
            )
        entry.commit()

    def squash(self, branch_pcs) -> int:
        """Undo *all* in-flight lookups of the given branches.

        Raises MissingCheckpoint if a branch has no entry or nothing
        in flight. Returns the number of lookups undone.
        """
        undone = 0
        for pc in branch_pcs:
            entry = self.entry_for(pc)
            if entry is None or not entry.inflight:
                raise MissingCheckpoint(
                    f"branch {pc:#x}: nothing in flight to squash"
                )
            undone += entry.squash()
        return undone

    def can_fill(self, branch_pc: int) -> bool:
        """A fill may proceed unless the victim has in-flight lookups."""
        victim = self.entries[self.slot_of(branch_pc)]
        return victim is None or not victim.inflight

    def fill(self, record: BranchRecord) -> BtuEntry:
        """Install an entry for `record`, evicting the slot's occupant.

        The occupant's checkpoint is spilled so its next fill resumes where
        committed progress stopped. Resumes honor this branch's own spilled
        checkpoint, if any.
        """
        slot = self.slot_of(record.branch_pc)
        victim = self.entries[slot]
        if victim is not None:
            if victim.inflight:
                raise CorruptEntry(
                    f"branch {victim.branch_pc:#x}: evicting an entry with "
                    f"in-flight lookups"
                )
            self.spilled[victim.branch_pc] = victim.checkpoint()
            self.stats.evictions += 1
            self.stats.spills += 1
        resume = self.spilled.pop(record.branch_pc, None)
        if resume is not None:
            self.stats.resumes += 1
        entry = BtuEntry(record, resume)
        self._stamp += 1
        entry.lru_stamp = self._stamp
        self.entries[slot] = entry
        return entry


# -- test / tooling helper -------------------------------------------------------

def replay_outcomes(record: BranchRecord, count: int,
                    commit_each: bool = True) -> list[int]:
    """Replay `count` outcomes of one branch record through a fresh entry.

    With commit_each, every lookup commits immediately (pure in-order
    replay); otherwise lookups run ahead and commits drain afterwards.
    Used as the replay-equals-decompression oracle.
    """
    entry = BtuEntry(record)
    out: list[int] = []
    pending = 0
    for _ in range(count):
        res = entry.lookup()
        if isinstance(res, Stall):
            if pending == 0:
                raise CorruptEntry("stall with nothing outstanding")
            while pending:
                entry.commit()
                pending -= 1
            res = entry.lookup()
        if isinstance(res, Stall):
            raise CorruptEntry("stall immediately after drain")
        out.append(res.target_pc)
        pending += 1
        if commit_each:
            entry.commit()
            pending -= 1
    while pending:
        entry.commit()
        pending -= 1
    return out
