"""Replay-unit and pipeline simulator tests."""

import dataclasses
import random

import pytest

from branchreplay.btusim.btu import (
    BtuEntry,
    BtuState,
    Miss,
    Redirect,
    Stall,
    replay_outcomes,
)
from branchreplay.btusim.pipeline import (
    PREDICTOR,
    REPLAY,
    PipelineConfig,
    build_stream,
    simulate,
    stream_from_log,
)
from branchreplay.compression import kmers_compress, to_dna, to_trace_elements, to_vanilla
from branchreplay.core.types import (
    BranchRecord,
    CheckpointElement,
    HintInfo,
    RawTrace,
    TraceBundle,
)
from branchreplay.errors import (
    BundleMismatch,
    CommitWithoutFetch,
    CorruptEntry,
    MissingCheckpoint,
)
from branchreplay.tracegen import (
    BranchKind,
    BranchLog,
    LogRecord,
    emit_branch_log,
    generate_traces,
    generate_traces_from_logs,
)
from branchreplay.uasm.exec import make_state
from branchreplay.uasm.parser import parse_program
from branchreplay.workloads import corpus, gen_many_branches


def record_for_raw(raw: RawTrace, idx: int = 0) -> BranchRecord:
    v = to_vanilla(raw)
    store, elements = to_trace_elements(kmers_compress(to_dna(v), 16))
    hint = HintInfo(single_target=False, field12=idx,
                    short_trace=len(elements) <= 16)
    return BranchRecord(raw.branch_pc, hint, store, elements)


PC = 0x100
T0, T1, T2 = 0x110, 0x120, 0x130
GOLDEN = RawTrace(PC, ([T0] * 2 + [T1] * 5) * 2 + [T2] * 3)


# -- entry: lookup ----------------------------------------------------------------

def test_lookup_sequence_matches_expansion():
    rec = record_for_raw(GOLDEN)
    entry = BtuEntry(rec)
    got = []
    for _ in range(17):
        res = entry.lookup()
        assert isinstance(res, Redirect)
        got.append(res.target_pc)
    assert got == list(GOLDEN.targets)


def test_lookup_counter_walk():
    # first trace element spans patterns (T0 x2)(T1 x5) = 7 outcomes, twice
    entry = BtuEntry(record_for_raw(GOLDEN))
    assert entry.window_view()[0] == (0, 7, 2)
    for _ in range(6):
        entry.lookup()
    assert entry.window_view()[0] == (0, 1, 2)
    entry.lookup()  # 7th drains the pattern span: refresh, burn one pass
    assert entry.window_view()[0] == (0, 7, 1)
    for _ in range(7):
        entry.lookup()
    assert entry.window_view()[0] == (0, 7, 0)
    # head exhausted speculatively: service moves to the next element
    res = entry.lookup()
    assert res == Redirect(PC + 0x30)


def test_lookup_stalls_when_window_is_drained():
    raw = RawTrace(PC, [T0, T1] * 2)  # 4 outcomes in one element
    entry = BtuEntry(record_for_raw(raw))
    for _ in range(4):
        assert isinstance(entry.lookup(), Redirect)
    assert isinstance(entry.lookup(), Stall)
    # commits free capacity only once the head element fully retires
    for _ in range(3):
        entry.commit()
        assert isinstance(entry.lookup(), Stall)
    entry.commit()
    assert isinstance(entry.lookup(), Redirect)


def test_entry_rejects_empty_trace():
    rec = record_for_raw(GOLDEN)
    eot_only = dataclasses.replace(rec, elements=rec.elements[-1:])
    with pytest.raises(CorruptEntry):
        BtuEntry(eot_only)


# -- entry: commit rotation ---------------------------------------------------------

def test_commit_rotates_head_and_wraps_through_eot():
    entry = BtuEntry(record_for_raw(GOLDEN))
    for _ in range(14):  # both passes of element 0
        entry.lookup()
        entry.commit()
    assert entry.cpt_trace_index == 1
    assert entry.window_view()[0] == (1, 3, 1)
    for _ in range(3):  # element 1, then wrap: EOT is skipped
        entry.lookup()
        entry.commit()
    assert entry.cpt_trace_index == 0
    assert entry.window_view()[0] == (0, 7, 2)
    # the wrapped trace replays identically
    got = [entry.lookup().target_pc for _ in range(17)]
    assert got == list(GOLDEN.targets)


def test_commit_without_lookup_raises():
    entry = BtuEntry(record_for_raw(GOLDEN))
    with pytest.raises(CommitWithoutFetch):
        entry.commit()


# -- entry: squash ------------------------------------------------------------------

def test_squash_all_restores_checkpoint():
    entry = BtuEntry(record_for_raw(GOLDEN))
    before = entry.window_view()
    for _ in range(16):  # crosses into the second element
        entry.lookup()
    assert entry.squash() == 16
    assert entry.window_view() == before
    assert not entry.inflight


def test_partial_squash_restores_prefix_state():
    entry_a = BtuEntry(record_for_raw(GOLDEN))
    entry_b = BtuEntry(record_for_raw(GOLDEN))
    for _ in range(5):
        entry_a.lookup()
    entry_a.squash(2)
    for _ in range(3):
        entry_b.lookup()
    assert entry_a.window_view() == entry_b.window_view()
    # replay resumes identically after the undo
    assert entry_a.lookup() == entry_b.lookup()


def test_squash_then_commit_round_trip():
    entry = BtuEntry(record_for_raw(GOLDEN))
    expect = list(GOLDEN.targets)
    got = []
    rng = random.Random(11)
    while len(got) < 17:
        n = rng.randint(1, 3)
        burst = []
        for _ in range(n):
            res = entry.lookup()
            if isinstance(res, Stall):
                break
            burst.append(res.target_pc)
        undo = rng.randint(0, len(burst))
        if undo:
            entry.squash(undo)
            burst = burst[: len(burst) - undo]
        for _ in range(len(burst)):
            entry.commit()
        got.extend(burst)
    assert got == expect


# -- unit: direct-mapped entries, eviction, resume ----------------------------------------

def test_conflicting_pcs_miss_until_filled():
    state = BtuState()
    rec_a = record_for_raw(RawTrace(0x10, [T0, T1] * 4))
    assert isinstance(state.lookup(0x10), Miss)
    state.fill(rec_a)
    assert isinstance(state.lookup(0x10), Redirect)
    assert isinstance(state.lookup(0x20), Miss)  # same slot, wrong tag
    assert state.stats.misses == 2 and state.stats.hits == 1


def test_eviction_spills_and_resume_continues():
    seq_a = ([0x30, 0x40] * 3 + [0x50] * 2) * 2
    rec_a = record_for_raw(RawTrace(0x10, seq_a))
    rec_b = record_for_raw(RawTrace(0x20, [T0, T1] * 3), idx=1)
    want = replay_outcomes(rec_a, len(seq_a))

    state = BtuState()
    state.fill(rec_a)
    got = []
    for _ in range(5):
        got.append(state.lookup(0x10).target_pc)
        state.commit(0x10)

    state.fill(rec_b)  # evicts A, spilling its checkpoint
    assert state.stats.evictions == 1
    assert 0x10 in state.spilled
    state.lookup(0x20)
    state.commit(0x20)

    state.fill(rec_a)  # resumes from the spill
    assert state.stats.resumes == 1
    assert 0x10 not in state.spilled
    for _ in range(len(seq_a) - 5):
        got.append(state.lookup(0x10).target_pc)
        state.commit(0x10)
    assert got == want


def test_entries_with_inflight_lookups_cannot_be_evicted():
    state = BtuState()
    state.fill(record_for_raw(RawTrace(0x10, [T0, T1] * 4)))
    state.lookup(0x10)
    rec_b = record_for_raw(RawTrace(0x20, [T0, T1] * 4), idx=1)
    assert not state.can_fill(0x20)
    with pytest.raises(CorruptEntry):
        state.fill(rec_b)
    state.commit(0x10)
    assert state.can_fill(0x20)
    state.fill(rec_b)


def test_unit_squash_requires_inflight_state():
    state = BtuState()
    with pytest.raises(MissingCheckpoint):
        state.squash([0x10])
    state.fill(record_for_raw(RawTrace(0x10, [T0, T1] * 4)))
    with pytest.raises(MissingCheckpoint):
        state.squash([0x10])
    state.lookup(0x10)
    assert state.squash([0x10]) == 1


def test_resume_at_eot_index_is_rejected():
    rec = record_for_raw(GOLDEN)
    eot_idx = len(rec.elements) - 1
    bad = CheckpointElement(eot_idx, 1, 1, (1, 1))
    with pytest.raises(CorruptEntry):
        BtuEntry(rec, bad)


# -- replay == decompression oracle --------------------------------------------------

def _random_raw(rng: random.Random) -> RawTrace:
    """A representable random trace: either a repeated block or an
    edge-distinct walk (no ordered target pair recurs, so no pattern forms
    and the store holds one slot per target)."""
    targets = [0x200 + 8 * i for i in range(rng.randint(3, 6))]
    if rng.random() < 0.5:
        block = []
        for t in rng.sample(targets, len(targets)):
            block.extend([t] * rng.randint(1, 4))
        return RawTrace(0x40, tuple(block * rng.randint(2, 40)))
    count_of = {t: rng.randint(1, 5) for t in targets}
    edges = [(a, b) for a in targets for b in targets if a != b]
    rng.shuffle(edges)
    walk = [edges[0][0], edges[0][1]]
    used = {edges[0]}
    while True:
        nxt = [e for e in edges if e not in used and e[0] == walk[-1]]
        if not nxt:
            break
        used.add(nxt[0])
        walk.append(nxt[0][1])
    out = []
    for t in walk:
        out.extend([t] * count_of[t])
    return RawTrace(0x40, tuple(out))


@pytest.mark.parametrize("seed", range(25))
def test_replay_equals_decompression(seed):
    rng = random.Random(seed)
    raw = _random_raw(rng)
    expect = list(to_vanilla(raw).expand())
    rec = record_for_raw(raw)
    assert replay_outcomes(rec, len(expect)) == expect
    # run-ahead replay (commits drained late) agrees too
    assert replay_outcomes(rec, len(expect), commit_each=False) == expect


def test_replay_wraps_cyclically():
    rec = record_for_raw(GOLDEN)
    assert replay_outcomes(rec, 34) == list(GOLDEN.targets) * 2


# -- pipeline --------------------------------------------------------------------

COUNTED_LOOP = """\
.reg i c done
.crypto LOOP END
        i <- 0
LOOP:   i <- i + 1
        c <- i < 4
        done <- c == 0
        beqz done, LOOP
END:    ret
"""


def _sim(name, mode, **overrides):
    prog, i1, i2 = corpus()[name]
    bundle = generate_traces(prog, i1, i2)
    stream = build_stream(prog, i1)
    config = PipelineConfig(**overrides)
    result = simulate(stream, bundle, config, mode, program=prog)
    return stream, result


def test_simulate_validates_arguments():
    prog, i1, i2 = corpus()["toy_aes2"]
    stream = build_stream(prog, i1)
    with pytest.raises(ValueError):
        simulate(stream, None, PipelineConfig(), "turbo", program=prog)
    with pytest.raises(ValueError):
        simulate(stream, None, PipelineConfig(), REPLAY, program=prog)


@pytest.mark.parametrize(
    "name", ["toy_aes2", "decrypt_loop", "many_branches", "table_branch"]
)
def test_replay_commits_oracle_stream_without_crypto_squashes(name):
    stream, result = _sim(name, REPLAY)
    assert result.committed_pcs == [e.pc for e in stream]
    assert result.stats.crypto_squashes == 0
    assert result.stats.committed == len(stream)


def test_predictor_counted_loop_pays_exactly_one_squash():
    prog = parse_program(COUNTED_LOOP)
    stream = build_stream(prog)
    result = simulate(stream, None, PipelineConfig(), PREDICTOR, program=prog)
    assert result.stats.noncrypto_squashes == 1
    assert result.stats.crypto_squashes == 0
    assert result.committed_pcs == [e.pc for e in stream]


def test_replay_beats_predictor_on_branchy_crypto():
    _, replay = _sim("toy_aes2", REPLAY)
    _, baseline = _sim("toy_aes2", PREDICTOR)
    assert replay.stats.crypto_squashes == 0
    assert baseline.stats.crypto_squashes + baseline.stats.noncrypto_squashes > 0
    assert replay.stats.cycles < baseline.stats.cycles


def test_eviction_pressure_spills_and_resumes():
    stream, result = _sim("many_branches", REPLAY)
    assert result.stats.btu_evictions > 0
    assert result.stats.btu_spill_resumes > 0
    assert result.committed_pcs == [e.pc for e in stream]


def test_untraced_stream_loop_stalls_fetch():
    stream, result = _sim("stream_cipher", REPLAY)
    assert result.stats.stream_loop_stalls > 0
    assert result.committed_pcs == [e.pc for e in stream]
    assert result.stats.crypto_squashes == 0


def test_window_stalls_under_long_resolve_latency():
    # an Eulerian walk over the complete digraph on five targets: every
    # adjacent pair of outcomes is distinct and no 2-gram repeats, so no
    # pattern forms and the trace lowers to 21 one-shot elements over a
    # 5-slot store. That overflows the 16-slot window; with commits parked
    # behind a long resolve latency, lookups drain it and fetch must wait.
    walk = [0, 1, 0, 2, 0, 3, 0, 4, 1, 2, 1, 3, 1, 4, 2, 3, 2, 4, 3, 4, 0]
    log = BranchLog(tuple(
        LogRecord(i, 0x8, 0x20 + 0x10 * s, BranchKind.CONDITIONAL)
        for i, s in enumerate(walk)
    ))
    bundle = generate_traces_from_logs("ab" * 32, (0, 0x10), log, log, log)
    record = bundle.records[0]
    assert len(record.elements) > 16  # the premise: window must slide
    stream = stream_from_log(log)
    config = PipelineConfig(resolve_latency=64, rob_size=64)
    result = simulate(stream, bundle, config, REPLAY)
    assert result.stats.window_stall_cycles > 0
    assert result.committed_pcs == [e.pc for e in stream]
    assert result.stats.crypto_squashes == 0


def test_tampered_hint_trips_bundle_mismatch():
    prog, i1, i2 = corpus()["toy_aes2"]
    bundle = generate_traces(prog, i1, i2)
    records = list(bundle.records)
    victim = next(i for i, r in enumerate(records) if r.hint.single_target)
    bad_hint = dataclasses.replace(
        records[victim].hint, field12=records[victim].hint.field12 + 2
    )
    records[victim] = dataclasses.replace(records[victim], hint=bad_hint)
    bad = dataclasses.replace(bundle, records=tuple(records))
    with pytest.raises(BundleMismatch):
        simulate(build_stream(prog, i1), bad, PipelineConfig(), REPLAY,
                 program=prog)


def test_integrity_check_blocks_speculative_crypto_entry():
    src = """\
.reg i c done
.crypto BODY BODYEND
        i <- 0
BODY:   i <- i + 1
BODYEND: c <- i < 3
        done <- c == 0
        beqz done, BODY
        ret
"""
    prog = parse_program(src)
    # the crypto range holds no branches, so build the bundle by hand
    bundle = TraceBundle("cd" * 32, 1, 2, ())
    stream = build_stream(prog)
    result = simulate(stream, bundle, PipelineConfig(), REPLAY, program=prog)
    assert result.stats.integrity_rejections == 3
    assert result.committed_pcs == [e.pc for e in stream]

    relaxed = PipelineConfig(integrity_check=False)
    loose = simulate(stream, bundle, relaxed, REPLAY, program=prog)
    assert loose.stats.integrity_rejections == 0
    assert loose.stats.cycles < result.stats.cycles


def test_injected_squashes_are_deterministic_and_harmless():
    prog, i1, i2 = corpus()["many_branches"]
    bundle = generate_traces(prog, i1, i2)
    stream = build_stream(prog, i1)
    config = PipelineConfig(squash_injection_rate=0.05, squash_seed=7)
    first = simulate(stream, bundle, config, REPLAY, program=prog)
    second = simulate(stream, bundle, config, REPLAY, program=prog)
    assert first.stats.injected_squashes > 0
    assert first.stats.crypto_squashes == 0
    assert first.committed_pcs == [e.pc for e in stream]
    assert second.committed_pcs == first.committed_pcs
    assert second.stats.to_dict() == first.stats.to_dict()


def test_log_driven_predictor_run_commits_the_log():
    prog, i1, _ = corpus()["decrypt_loop"]
    log = emit_branch_log(prog, make_state(prog, i1))
    stream = stream_from_log(log)
    result = simulate(stream, None, PipelineConfig(), PREDICTOR)
    assert result.committed_pcs == [r.branch_pc for r in log.records]
    assert result.stats.noncrypto_squashes > 0
