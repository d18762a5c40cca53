"""Cycle-level pipeline simulator driving the branch trace unit.

Two modes:

  replay      crypto-range branches are steered by their recorded traces
              (single-target hints redirect statelessly; everything else
              goes through the replay unit); other branches use the
              predictor. Crypto branches never touch the predictor and,
              with the integrity check on, predicted targets landing inside
              the crypto range stall instead of redirecting speculatively.
  predictor   every branch uses the predictor; mispredictions squash after
              the resolve latency. This is the insecure baseline.

The machine is deliberately simple: in-order fetch of up to fetch_width
instructions per cycle (a fetch group ends at any branch), a resolve
latency per branch, an in-order commit of resolved instructions, and a
reorder buffer of bounded size. Untraced (stream-loop) branches stall
fetch until they resolve. Wrong-path fetch walks the real program text and
performs real replay-unit lookups, which a squash precisely undoes.

Squash injection (squash_injection_rate > 0) flushes a random suffix of
the reorder buffer to stress checkpoint restoration.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from branchreplay.btusim.btu import BtuState, Miss, Redirect, Stall
from branchreplay.core.types import TraceBundle
from branchreplay.errors import BundleMismatch, StepBudgetExceeded
from branchreplay.tracegen import BranchKind, BranchLog
from branchreplay.uasm.exec import ArchState, InputSpec, make_state, run_program
from branchreplay.uasm.parser import Program

REPLAY = "replay"
PREDICTOR = "predictor"


@dataclass(frozen=True)
class StreamEntry:
    """One committed instruction of the reference (architectural) run."""

    pc: int
    is_branch: bool
    kind: BranchKind | None
    next_pc: int
    fallthrough: int


@dataclass
class PipelineConfig:
    fetch_width: int = 4
    rob_size: int = 64
    resolve_latency: int = 8
    # trace records live in a small SRAM store next to the unit; a refill
    # (or a checkpointed spill/resume) costs on the order of the fetch
    # path, not a trip through a memory hierarchy this model doesn't have
    fill_latency: int = 4
    predictor: str = "twobit"  # or "always-taken"
    integrity_check: bool = True
    warm_btu: bool = True
    cycle_budget: int = 5_000_000
    squash_injection_rate: float = 0.0
    squash_seed: int = 0


@dataclass
class SimStats:
    cycles: int = 0
    fetched: int = 0
    committed: int = 0
    crypto_squashes: int = 0
    noncrypto_squashes: int = 0
    injected_squashes: int = 0
    btu_hits: int = 0
    btu_misses: int = 0
    btu_evictions: int = 0
    btu_spill_resumes: int = 0
    window_stall_cycles: int = 0
    fill_stall_cycles: int = 0
    stream_loop_stalls: int = 0
    integrity_rejections: int = 0
    single_target_redirects: int = 0

    def to_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class SimResult:
    stats: SimStats
    committed_pcs: list[int]


def build_stream(
    program: Program, inputs: InputSpec | None = None, budget: int = 1_000_000
) -> list[StreamEntry]:
    """The committed-instruction oracle: one entry per executed instruction."""
    entries: list[StreamEntry] = []
    kind_of = {"beqz": BranchKind.CONDITIONAL, "call": BranchKind.CALL,
               "ret": BranchKind.RETURN}

    def collect(pc, instr, nxt, obs):
        kind = kind_of.get(instr.op)
        entries.append(
            StreamEntry(pc, kind is not None, kind, nxt, pc + 1)
        )

    run_program(program, make_state(program, inputs), budget, collect)
    return entries


def stream_from_log(log: BranchLog) -> list[StreamEntry]:
    """A branch-only stream for log-driven simulation. Fallthrough is set
    to branch_pc + 1, which a log cannot know better."""
    return [
        StreamEntry(r.branch_pc, True, r.kind, r.target_pc, r.branch_pc + 1)
        for r in log.records
    ]


class _Predictor:
    """Per-pc two-bit direction counters plus a last-target map for
    returns. Calls are direct and always predicted correctly."""

    def __init__(self, kind: str):
        if kind not in ("twobit", "always-taken"):
            raise ValueError(f"unknown predictor {kind!r}")
        self.kind = kind
        self.counters: dict[int, int] = {}
        self.last_target: dict[int, int] = {}

    def predict(self, entry: StreamEntry, program: Program | None) -> int:
        if entry.kind is BranchKind.CONDITIONAL:
            taken_target = None
            if program is not None:
                taken_target = program.instructions[entry.pc].target
            if taken_target is None:
                # log-driven: the only known target is the last one seen
                taken_target = self.last_target.get(entry.pc, entry.fallthrough)
            if self.kind == "always-taken":
                return taken_target
            counter = self.counters.get(entry.pc, 2)  # weakly taken
            return taken_target if counter >= 2 else entry.fallthrough
        if entry.kind is BranchKind.CALL:
            if program is not None:
                return program.instructions[entry.pc].target
            return self.last_target.get(entry.pc, entry.fallthrough)
        # return: last-target prediction
        return self.last_target.get(entry.pc, entry.fallthrough)

    def update(self, entry: StreamEntry, actual_next: int) -> None:
        if entry.kind is BranchKind.CONDITIONAL and self.kind == "twobit":
            taken = actual_next != entry.fallthrough
            c = self.counters.get(entry.pc, 2)
            self.counters[entry.pc] = min(3, c + 1) if taken else max(0, c - 1)
        self.last_target[entry.pc] = actual_next


class _Slot:
    """One reorder-buffer slot."""

    __slots__ = (
        "pc", "is_branch", "crypto", "resolve_cycle", "correct",
        "oracle_idx", "oracle_next", "mispredicted", "predicted_next",
        "btu_pc", "stalling", "resume_wrong", "resume_wrong_pc",
        "oracle_pos_after", "entry",
    )

    def __init__(self, pc: int, is_branch: bool, crypto: bool, correct: bool):
        self.pc = pc
        self.is_branch = is_branch
        self.crypto = crypto
        self.resolve_cycle = 0
        self.correct = correct
        self.oracle_idx: int | None = None
        self.oracle_next: int | None = None
        self.mispredicted = False
        self.predicted_next: int | None = None
        self.btu_pc: int | None = None
        self.stalling = False
        self.resume_wrong = False
        self.resume_wrong_pc: int | None = None
        self.oracle_pos_after = 0
        self.entry: StreamEntry | None = None


NEVER = 1 << 62  # resolve cycle for branches that can only be flushed


def simulate(
    stream: list[StreamEntry],
    bundle: TraceBundle | None,
    config: PipelineConfig,
    mode: str,
    program: Program | None = None,
) -> SimResult:
    """Run the pipeline over the reference stream.

    `program` enables wrong-path fetch through the real program text; a
    log-driven run (program None) stalls fetch on a mispredicted branch
    until it resolves instead.
    """
    if mode not in (REPLAY, PREDICTOR):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == REPLAY and bundle is None:
        raise ValueError("replay mode needs a bundle")

    stats = SimStats()
    predictor = _Predictor(config.predictor)
    btu = BtuState()
    crypto_range = (bundle.crypto_lo, bundle.crypto_hi) if bundle else None

    if mode == REPLAY and config.warm_btu:
        for rec in bundle.records:
            if rec.elements:
                btu.fill(rec)

    rob: list[_Slot] = []
    committed_pcs: list[int] = []
    oracle_pos = 0  # next correct-path stream entry to fetch
    commit_pos = 0  # next stream entry to commit
    wrong_path = False
    wrong_pc = 0
    stall_slot: _Slot | None = None
    pending_fill: tuple[int, int] | None = None  # (branch_pc, ready cycle)
    rng = random.Random(config.squash_seed)
    cycle = 0

    def in_crypto(pc: int) -> bool:
        return crypto_range is not None and crypto_range[0] <= pc <= crypto_range[1]

    def flush_from(idx: int) -> None:
        """Flush rob[idx:], undoing replay-unit lookups youngest first."""
        nonlocal stall_slot
        for slot in reversed(rob[idx:]):
            if slot.btu_pc is not None:
                btu.entry_for(slot.btu_pc).squash(1)
            if slot is stall_slot:
                stall_slot = None
        del rob[idx:]

    while True:
        if commit_pos == len(stream) and not rob:
            break
        if cycle > config.cycle_budget:
            raise StepBudgetExceeded(
                f"simulation exceeded {config.cycle_budget} cycles"
            )

        # -- resolve: at most one unresolved mispredict exists at a time
        for i, slot in enumerate(rob):
            if (slot.mispredicted and slot.resolve_cycle == cycle
                    and slot.correct):
                flush_from(i + 1)
                if slot.crypto:
                    stats.crypto_squashes += 1
                else:
                    stats.noncrypto_squashes += 1
                oracle_pos = slot.oracle_idx + 1
                wrong_path = False
                stall_slot = None
                slot.mispredicted = False
                break
        if (stall_slot is not None and stall_slot.correct
                and stall_slot.resolve_cycle <= cycle):
            stall_slot = None

        # -- injected squashes (checkpoint stress)
        if config.squash_injection_rate > 0 and rob:
            if rng.random() < config.squash_injection_rate:
                cut = rng.randrange(len(rob))
                flush_from(cut)
                stats.injected_squashes += 1
                if rob:
                    last = rob[-1]
                    wrong_path = last.resume_wrong
                    wrong_pc = last.resume_wrong_pc or 0
                    oracle_pos = last.oracle_pos_after
                else:
                    wrong_path = False
                    oracle_pos = commit_pos

        # -- commit, in order
        commits_left = config.fetch_width
        while rob and commits_left and rob[0].resolve_cycle <= cycle:
            slot = rob.pop(0)
            if not slot.correct:
                raise BundleMismatch(
                    f"wrong-path instruction at {slot.pc:#x} reached commit"
                )
            if slot.btu_pc is not None:
                btu.commit(slot.btu_pc)
            if slot.is_branch and slot.entry is not None:
                if not (mode == REPLAY and slot.crypto):
                    predictor.update(slot.entry, slot.oracle_next)
            committed_pcs.append(slot.pc)
            commit_pos += 1
            stats.committed += 1
            commits_left -= 1

        # -- fill completion
        if pending_fill is not None and cycle >= pending_fill[1]:
            pc = pending_fill[0]
            if btu.can_fill(pc):
                btu.fill(bundle.record_for(pc))
                pending_fill = None
            else:
                pending_fill = (pc, cycle + 1)
                stats.fill_stall_cycles += 1

        # -- fetch
        fetches_left = config.fetch_width
        while fetches_left > 0:
            if stall_slot is not None or pending_fill is not None:
                if pending_fill is not None:
                    stats.fill_stall_cycles += 1
                break
            if len(rob) >= config.rob_size:
                break
            if wrong_path:
                if program is None or not 0 <= wrong_pc < program.terminal:
                    break  # nothing sensible to fetch until the squash
                entry = None
                pc = wrong_pc
            else:
                if oracle_pos >= len(stream):
                    break
                entry = stream[oracle_pos]
                pc = entry.pc

            is_branch, kind, target = _decode(program, entry, pc)
            slot = _Slot(pc, is_branch, in_crypto(pc), not wrong_path)
            slot.entry = entry
            if not wrong_path:
                slot.oracle_idx = oracle_pos
                slot.oracle_next = entry.next_pc

            if not is_branch:
                slot.resolve_cycle = cycle + 1
                next_pc = pc + 1
                if not wrong_path:
                    oracle_pos += 1
                else:
                    wrong_pc = next_pc
                slot.oracle_pos_after = oracle_pos
                slot.resume_wrong = wrong_path
                slot.resume_wrong_pc = wrong_pc if wrong_path else None
                rob.append(slot)
                stats.fetched += 1
                fetches_left -= 1
                continue

            # branches end the fetch group
            slot.resolve_cycle = cycle + config.resolve_latency
            handled = _fetch_branch(
                slot, pc, kind, target, entry, mode, bundle, btu, predictor,
                program, config, stats, cycle,
            )
            if handled is None:
                # stall without allocation (window stall or fill request)
                fetches_left = 0
                break
            next_pc, stall, never_resolves, fill_req = handled
            if fill_req is not None:
                pending_fill = (fill_req, cycle + config.fill_latency)
                fetches_left = 0
                break
            if never_resolves:
                slot.resolve_cycle = NEVER
            if not wrong_path:
                oracle_pos += 1
                if next_pc is None:
                    # stalling branch: fetch resumes after resolve
                    pass
                elif next_pc != entry.next_pc:
                    wrong_path = True
                    wrong_pc = next_pc
            else:
                if next_pc is not None:
                    wrong_pc = next_pc
            slot.oracle_pos_after = oracle_pos
            slot.resume_wrong = wrong_path
            slot.resume_wrong_pc = wrong_pc if wrong_path else None
            if stall:
                slot.stalling = True
                stall_slot = slot
            rob.append(slot)
            stats.fetched += 1
            break  # end of fetch group

        cycle += 1

    stats.cycles = cycle
    stats.btu_hits = btu.stats.hits
    stats.btu_misses = btu.stats.misses
    stats.btu_evictions = btu.stats.evictions
    stats.btu_spill_resumes = btu.stats.resumes
    return SimResult(stats, committed_pcs)


def _decode(program, entry, pc):
    """(is_branch, kind, taken_target) for the instruction at pc."""
    if entry is not None:
        target = None
        if program is not None and entry.is_branch:
            target = program.instructions[pc].target
        return entry.is_branch, entry.kind, target
    instr = program.instructions[pc]
    kind = {"beqz": BranchKind.CONDITIONAL, "call": BranchKind.CALL,
            "ret": BranchKind.RETURN}.get(instr.op)
    return kind is not None, kind, instr.target


def _fetch_branch(
    slot, pc, kind, target, entry, mode, bundle, btu, predictor,
    program, config, stats, cycle,
):
    """Steer one fetched branch.

    Returns None to retry next cycle without allocating, or a tuple
    (next_pc | None, stalls_fetch, never_resolves, fill_request_pc | None).
    next_pc None means fetch stalls until this branch resolves.
    """
    wrong = not slot.correct

    if mode == REPLAY and slot.crypto:
        record = bundle.record_for(pc)
        if record is None:
            # stream loop: deliberately untraced, stall until resolve
            stats.stream_loop_stalls += 1
            if wrong:
                return (None, True, True, None)
            return (None, True, False, None)
        if record.hint.single_target:
            stats.single_target_redirects += 1
            next_pc = pc + record.hint.field12
            if not wrong and next_pc != slot.oracle_next:
                raise BundleMismatch(
                    f"branch {pc:#x}: hint target {next_pc:#x} != "
                    f"architectural {slot.oracle_next:#x}"
                )
            return (next_pc, False, False, None)
        res = btu.lookup(pc)
        if isinstance(res, Miss):
            return (None, False, False, pc)  # schedule a fill, retry
        if isinstance(res, Stall):
            stats.window_stall_cycles += 1
            return None
        slot.btu_pc = pc
        if not wrong and res.target_pc != slot.oracle_next:
            raise BundleMismatch(
                f"branch {pc:#x}: replay target {res.target_pc:#x} != "
                f"architectural {slot.oracle_next:#x}"
            )
        return (res.target_pc, False, False, None)

    # predictor path
    if entry is not None:
        predicted = predictor.predict(entry, program)
    else:
        # wrong-path branch: predict through the program text
        pseudo = StreamEntry(pc, True, kind, pc + 1, pc + 1)
        predicted = predictor.predict(pseudo, program)

    if (mode == REPLAY and config.integrity_check and not slot.crypto
            and bundle is not None
            and bundle.crypto_lo <= predicted <= bundle.crypto_hi):
        # speculative entry into the crypto region is refused
        stats.integrity_rejections += 1
        if wrong:
            return (None, True, True, None)
        return (None, True, False, None)

    if wrong:
        if program is None:
            return (None, True, True, None)
        return (predicted, False, True, None)

    slot.predicted_next = predicted
    if predicted != slot.oracle_next:
        if program is None:
            # log-driven: charge the penalty as a fetch stall
            slot.mispredicted = True
            return (None, True, False, None)
        slot.mispredicted = True
        return (predicted, False, False, None)
    return (predicted, False, False, None)
