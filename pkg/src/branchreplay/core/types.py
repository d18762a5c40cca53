"""Core value types for branch traces and their hardware encodings.

The pipeline moves through four representations:

    RawTrace      per-branch list of taken targets, in execution order
    VanillaTrace  run-length encoded (target, count) pairs, maximal runs
    DnaSequence   dense integer symbols, one per distinct (target, count) pair
    KmersRepresentation
                  symbol string plus a set of substitution patterns

and bottoms out in the wire/hardware encoding:

    PatternElement   (signed 12-bit target offset, unsigned 8-bit reps)
    TraceElement     window slot: which store slice, how far through it,
                     how many repeats remain
    HintInfo         14-bit static hint attached to a branch site
    BranchRecord / TraceBundle
                     everything for one branch / one program

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

from branchreplay.errors import (
    CounterOverflow,
    InvalidHint,
    OffsetOverflow,
)

OFFSET_MIN = -2048
OFFSET_MAX = 2047
REPS_MAX = 255
COUNTER_MAX = 0xFFFF
STORE_CAPACITY = 16
WINDOW_CAPACITY = 16


@dataclass(frozen=True)
class BranchOutcome:
    """One dynamic execution of a branch: where it went."""

    branch_pc: int
    target_pc: int


@dataclass(frozen=True)
class RawTrace:
    """All observed targets of one static branch, in execution order."""

    branch_pc: int
    targets: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class VanillaElement:
    """A maximal run of one target: (target_pc, count)."""

    target_pc: int
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("run count must be >= 1")


@dataclass(frozen=True)
class VanillaTrace:
    """Run-length encoded trace. Adjacent elements have distinct targets."""

    branch_pc: int
    elements: tuple[VanillaElement, ...]

    def __post_init__(self):
        for a, b in zip(self.elements, self.elements[1:]):
            if a.target_pc == b.target_pc:
                raise ValueError("adjacent runs must have distinct targets")

    def __len__(self) -> int:
        return len(self.elements)

    def expand(self) -> tuple[int, ...]:
        """Back to the raw target list."""
        out: list[int] = []
        for e in self.elements:
            out.extend([e.target_pc] * e.count)
        return tuple(out)


@dataclass(frozen=True)
class DnaSequence:
    """Trace as a string of dense integer symbols.

    Symbols are assigned in order of first appearance, starting at 0.
    Identical (target, count) runs share a symbol. symbol_map holds the
    base alphabet only; substitution patterns live in KmersRepresentation.
    """

    branch_pc: int
    symbols: tuple[int, ...]
    symbol_map: dict[int, VanillaElement]

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class Pattern:
    """A substitution rule: symbol `id` expands to `body`.

    Bodies may reference base symbols and patterns created earlier,
    never later ones, so expansion always terminates.
    """

    id: int
    body: tuple[int, ...]


@dataclass(frozen=True)
class KmersRepresentation:
    """Compressed trace: symbol string K plus pattern set P."""

    branch_pc: int
    k_trace: tuple[int, ...]
    pattern_set: tuple[Pattern, ...]
    symbol_map: dict[int, VanillaElement]


@dataclass(frozen=True)
class PatternElement:
    """One store slot: jump `target_offset` from the branch, `reps` times.

    target_offset is a signed 12-bit value, reps an unsigned 8-bit value,
    so each element packs into exactly 20 bits.
    """

    target_offset: int
    reps: int

    def __post_init__(self):
        if not OFFSET_MIN <= self.target_offset <= OFFSET_MAX:
            raise OffsetOverflow(
                f"target offset {self.target_offset} outside "
                f"[{OFFSET_MIN}, {OFFSET_MAX}]"
            )
        if not 1 <= self.reps <= REPS_MAX:
            raise ValueError(f"reps {self.reps} outside [1, {REPS_MAX}]")


@dataclass(frozen=True)
class TraceElement:
    """One window slot of a branch's replay trace.

    Fields (packed into 41 bits on the wire):
        pattern_index    4 bits, first store slot of this element's pattern
        pattern_size     4 bits, number of store slots (0 encodes none/EOT)
        pattern_counter  16 bits, outcomes left in the current pass
        trace_counter    16 bits, passes left (full repeats of the pattern)
        eot              1 bit, end-of-trace marker (wrap to the start)

    An EOT element has every other field zero.
    """

    pattern_index: int
    pattern_size: int
    pattern_counter: int
    trace_counter: int
    eot: bool = False

    def __post_init__(self):
        if self.eot:
            if (self.pattern_index or self.pattern_size
                    or self.pattern_counter or self.trace_counter):
                raise ValueError("EOT element must have all fields zero")
            return
        if not 0 <= self.pattern_index < STORE_CAPACITY:
            raise ValueError("pattern_index outside store")
        if self.pattern_size < 1 or self.pattern_index + self.pattern_size > STORE_CAPACITY:
            raise ValueError("pattern slice outside store")
        if not 1 <= self.trace_counter <= COUNTER_MAX:
            raise CounterOverflow(
                f"trace_counter {self.trace_counter} outside [1, {COUNTER_MAX}]"
            )
        if not 1 <= self.pattern_counter <= COUNTER_MAX:
            raise CounterOverflow(
                f"pattern_counter {self.pattern_counter} outside [1, {COUNTER_MAX}]"
            )


EOT = TraceElement(0, 0, 0, 0, eot=True)


@dataclass(frozen=True)
class CheckpointElement:
    """Committed progress through a branch's trace.

    trace_index addresses the full element list, the counters mirror the
    head element's live counters at committed granularity, head_original
    remembers the head's as-loaded (pattern_counter, trace_counter) so a
    refresh never exceeds the original values.
    """

    trace_index: int
    pattern_counter: int
    trace_counter: int
    head_original: tuple[int, int]


@dataclass(frozen=True)
class HintInfo:
    """Static 14-bit hint attached to a branch site.

    single_target  1 bit   branch always goes one place; field12 is its offset
    field12        12 bits signed: target offset (single-target) or the index
                   of the branch's record in the bundle (multi-target)
    short_trace    1 bit   whole trace fits the 16-element window

    single_target and short_trace are mutually exclusive.
    """

    single_target: bool
    field12: int
    short_trace: bool

    def __post_init__(self):
        if self.single_target and self.short_trace:
            raise InvalidHint("single-target and short-trace bits both set")
        if not OFFSET_MIN <= self.field12 <= OFFSET_MAX:
            raise OffsetOverflow(
                f"hint field12 {self.field12} outside [{OFFSET_MIN}, {OFFSET_MAX}]"
            )


@dataclass(frozen=True)
class BranchRecord:
    """Everything the replay unit needs for one static branch."""

    branch_pc: int
    hint: HintInfo
    store: tuple[PatternElement, ...]
    elements: tuple[TraceElement, ...]

    def __post_init__(self):
        if len(self.store) > STORE_CAPACITY:
            raise ValueError("store exceeds capacity")
        for el in self.elements:
            if not el.eot and el.pattern_index + el.pattern_size > len(self.store):
                raise ValueError("trace element references beyond store")


@dataclass(frozen=True)
class TraceBundle:
    """All branch records for one program, plus identifying metadata.

    program_hash is the SHA-256 hex digest of the program text the traces
    were recorded from. Records are sorted by branch_pc.
    """

    program_hash: str
    crypto_lo: int
    crypto_hi: int
    records: tuple[BranchRecord, ...]

    def __post_init__(self):
        pcs = [r.branch_pc for r in self.records]
        if pcs != sorted(pcs) or len(set(pcs)) != len(pcs):
            raise ValueError("records must be strictly sorted by branch_pc")

    def record_for(self, branch_pc: int) -> BranchRecord | None:
        lo, hi = 0, len(self.records)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.records[mid].branch_pc < branch_pc:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.records) and self.records[lo].branch_pc == branch_pc:
            return self.records[lo]
        return None
