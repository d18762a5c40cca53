"""Offline trace generation: branch logs in, replay bundles out.

A branch log is the record of every control-flow event of one run. Logs come
from the toy-ISA executor (emit_branch_log) or from external text files
(parse_branch_log). Trace generation runs the program twice on different
inputs, keeps only branches inside the crypto address range, classifies each
one, compresses its outcomes, and packs everything into a TraceBundle:

    stream loop    trace depends on public input length -> left untraced
    single target  one destination ever -> 14-bit hint only, no trace
    short trace    whole element list fits the 16-slot window
    multi target   longer trace, window slides through it

Traces whose lowered pattern store would overflow its 16 slots are treated
like stream loops: untraced, resolved in order at run time.

The same-input determinism check (two logs of one input must agree) guards
externally ingested logs; the builtin executor cannot trip it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from branchreplay.compression import kmers_compress, to_dna, to_trace_elements, to_vanilla
from branchreplay.core.types import (
    BranchRecord,
    HintInfo,
    KmersRepresentation,
    RawTrace,
    TraceBundle,
    VanillaTrace,
)
from branchreplay.errors import (
    CapacityExceeded,
    EmptyLog,
    NonConstantControlFlow,
    OffsetOverflow,
)
from branchreplay.uasm.exec import ArchState, InputSpec, make_state, run_program
from branchreplay.uasm.parser import Program


class BranchKind(Enum):
    CONDITIONAL = 0
    CALL = 1
    RETURN = 2
    INDIRECT = 3


@dataclass(frozen=True)
class LogRecord:
    """One dynamic branch: sequence number, site, resolved target, kind."""

    index: int
    branch_pc: int
    target_pc: int
    kind: BranchKind


@dataclass(frozen=True)
class BranchLog:
    records: tuple[LogRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


_KIND_NAMES = {k.name.lower(): k for k in BranchKind}


def parse_branch_log(text: str) -> BranchLog:
    """Parse the four-column hex log format: index kind branch_pc target_pc.

    The kind column is the hex code of the BranchKind (0..3); symbolic kind
    names are accepted too. Lines starting with '#' and blank lines are
    skipped. Raises EmptyLog if no records remain.
    """
    records = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise EmptyLog(f"line {line_no}: expected 4 fields, got {len(fields)}")
        idx_s, kind_s, pc_s, target_s = fields
        kind = _KIND_NAMES.get(kind_s.lower())
        if kind is None:
            try:
                kind = BranchKind(int(kind_s, 16))
            except ValueError as exc:
                raise EmptyLog(f"line {line_no}: bad kind {kind_s!r}") from exc
        try:
            records.append(
                LogRecord(int(idx_s, 16), int(pc_s, 16), int(target_s, 16), kind)
            )
        except ValueError as exc:
            raise EmptyLog(f"line {line_no}: bad hex field") from exc
    if not records:
        raise EmptyLog("log has no records")
    return BranchLog(tuple(records))


def format_branch_log(log: BranchLog) -> str:
    """Inverse of parse_branch_log (hex kind codes)."""
    lines = [
        f"{r.index:x} {r.kind.value:x} {r.branch_pc:x} {r.target_pc:x}"
        for r in log.records
    ]
    return "\n".join(lines) + "\n"


_KIND_OF_OP = {"beqz": BranchKind.CONDITIONAL, "call": BranchKind.CALL,
               "ret": BranchKind.RETURN}


def emit_branch_log(
    program: Program, state: ArchState, budget: int = 1_000_000
) -> BranchLog:
    """Run the program and log every branch with its resolved target."""
    records: list[LogRecord] = []

    def collect(pc, instr, nxt, obs):
        kind = _KIND_OF_OP.get(instr.op)
        if kind is not None:
            records.append(LogRecord(len(records), pc, nxt, kind))

    run_program(program, state, budget, collect)
    return BranchLog(tuple(records))


def detect_static_branches(log: BranchLog) -> tuple[int, ...]:
    """Distinct branch sites in the log, sorted by address."""
    return tuple(sorted({r.branch_pc for r in log.records}))


def raw_traces_from_log(
    log: BranchLog, crypto: tuple[int, int] | None = None
) -> dict[int, RawTrace]:
    """Group targets by branch site, preserving order; optionally filter to
    the crypto address range."""
    grouped: dict[int, list[int]] = {}
    for r in log.records:
        if crypto is not None and not crypto[0] <= r.branch_pc <= crypto[1]:
            continue
        grouped.setdefault(r.branch_pc, []).append(r.target_pc)
    return {
        pc: RawTrace(pc, tuple(targets)) for pc, targets in grouped.items()
    }


# -- classification -----------------------------------------------------------

class BranchClass(Enum):
    STREAM_LOOP = "stream-loop"
    SINGLE_TARGET = "single-target"
    SHORT_TRACE = "short-trace"
    MULTI_TARGET = "multi-target"


@dataclass(frozen=True)
class ClassifiedBranch:
    branch_pc: int
    klass: BranchClass
    rep: KmersRepresentation | None  # None for stream loops
    vanilla: VanillaTrace | None


def classify_branch(
    vanilla_a: VanillaTrace,
    rep_a: KmersRepresentation,
    vanilla_b: VanillaTrace | None,
) -> BranchClass:
    """Classify one branch given traces from two different inputs.

    vanilla_b is the second input's trace (None if the branch never ran
    there, itself a stream dependence). A branch whose expanded traces
    differ across inputs is a stream loop and stays untraced. A trace too
    irregular for the 16-slot pattern store also stays untraced: the replay
    unit cannot hold it, so such a branch falls back to the same
    stall-until-resolve handling as a stream loop.
    """
    if vanilla_b is None or vanilla_a.expand() != vanilla_b.expand():
        return BranchClass.STREAM_LOOP
    targets = {el.target_pc for el in vanilla_a.elements}
    if len(targets) == 1:
        return BranchClass.SINGLE_TARGET
    try:
        _, elements = to_trace_elements(rep_a)
    except CapacityExceeded:
        return BranchClass.STREAM_LOOP
    if len(elements) <= 16:  # EOT included, fits the replay window
        return BranchClass.SHORT_TRACE
    return BranchClass.MULTI_TARGET


def program_hash(program: Program) -> str:
    return hashlib.sha256(program.source.encode()).hexdigest()


def classify_program(
    program: Program,
    inp1: InputSpec,
    inp2: InputSpec,
    max_k: int = 16,
    budget: int = 1_000_000,
) -> list[ClassifiedBranch]:
    """Run on both inputs and classify every crypto-range branch."""
    if program.crypto is None:
        return []
    log1 = emit_branch_log(program, make_state(program, inp1), budget)
    log2 = emit_branch_log(program, make_state(program, inp2), budget)
    return _classify_from_logs(program.crypto, log1, log2, max_k)


def _classify_from_logs(
    crypto: tuple[int, int],
    log1: BranchLog,
    log2: BranchLog,
    max_k: int = 16,
) -> list[ClassifiedBranch]:
    raws1 = raw_traces_from_log(log1, crypto)
    raws2 = raw_traces_from_log(log2, crypto)
    out = []
    for pc in sorted(set(raws1) | set(raws2)):
        raw1 = raws1.get(pc)
        if raw1 is None:
            # ran only under the second input: stream-dependent
            v2 = to_vanilla(raws2[pc])
            out.append(ClassifiedBranch(pc, BranchClass.STREAM_LOOP, None, v2))
            continue
        v1 = to_vanilla(raw1)
        rep1 = kmers_compress(to_dna(v1), max_k)
        raw2 = raws2.get(pc)
        v2 = to_vanilla(raw2) if raw2 is not None else None
        klass = classify_branch(v1, rep1, v2)
        if klass is BranchClass.STREAM_LOOP:
            out.append(ClassifiedBranch(pc, klass, None, v1))
        else:
            out.append(ClassifiedBranch(pc, klass, rep1, v1))
    return out


# -- bundle generation ----------------------------------------------------------

def build_bundle(
    digest: str,
    crypto: tuple[int, int],
    classified: list[ClassifiedBranch],
) -> TraceBundle:
    """Pack classified branches into a bundle (stream loops are skipped)."""
    traced = [
        c for c in classified if c.klass is not BranchClass.STREAM_LOOP
    ]
    traced.sort(key=lambda c: c.branch_pc)
    records = []
    for idx, c in enumerate(traced):
        if c.klass is BranchClass.SINGLE_TARGET:
            offset = c.vanilla.elements[0].target_pc - c.branch_pc
            hint = HintInfo(single_target=True, field12=offset, short_trace=False)
            records.append(BranchRecord(c.branch_pc, hint, (), ()))
            continue
        if idx > 2047:
            raise OffsetOverflow(
                f"bundle index {idx} does not fit the 12-bit hint field"
            )
        store, elements = to_trace_elements(c.rep)
        hint = HintInfo(
            single_target=False,
            field12=idx,
            short_trace=c.klass is BranchClass.SHORT_TRACE,
        )
        records.append(BranchRecord(c.branch_pc, hint, store, elements))
    return TraceBundle(digest, crypto[0], crypto[1], tuple(records))


def generate_traces(
    program: Program,
    inp1: InputSpec,
    inp2: InputSpec,
    max_k: int = 16,
    budget: int = 1_000_000,
) -> TraceBundle:
    """End-to-end: run on two inputs, classify, compress, bundle.

    Raises ValueError if the program declares no crypto range.
    """
    if program.crypto is None:
        raise ValueError("program declares no .crypto range; nothing to trace")
    classified = classify_program(program, inp1, inp2, max_k, budget)
    return build_bundle(program_hash(program), program.crypto, classified)


def generate_traces_from_logs(
    digest: str,
    crypto: tuple[int, int],
    log1a: BranchLog,
    log1b: BranchLog,
    log2: BranchLog,
    max_k: int = 16,
) -> TraceBundle:
    """Bundle from externally recorded logs.

    log1a and log1b must come from two runs on the *same* input; any
    disagreement between them on a crypto-range branch's compressed trace
    raises NonConstantControlFlow.
    """
    raws_a = raw_traces_from_log(log1a, crypto)
    raws_b = raw_traces_from_log(log1b, crypto)
    if set(raws_a) != set(raws_b):
        raise NonConstantControlFlow(
            "identical inputs executed different branch sites"
        )
    for pc, raw_a in raws_a.items():
        rep_a = kmers_compress(to_dna(to_vanilla(raw_a)), max_k)
        rep_b = kmers_compress(to_dna(to_vanilla(raws_b[pc])), max_k)
        if rep_a != rep_b:
            raise NonConstantControlFlow(
                f"branch {pc:#x}: identical inputs produced different traces"
            )
    classified = _classify_from_logs(crypto, log1a, log2, max_k)
    return build_bundle(digest, crypto, classified)
