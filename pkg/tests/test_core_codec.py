"""Bit-format and serialization tests.

The superstring compaction tests use a brute-force oracle (smallest
container checked over all merge orders) on tiny inputs; the packers are
checked against hand-computed bit layouts and randomized round-trips.
"""

import random

import pytest

from branchreplay.core.codec import (
    MAGIC,
    compact_pattern_store,
    decode_bundle,
    decode_hint,
    encode_bundle,
    encode_hint,
    pack_pattern_elements,
    pack_trace_elements,
    split_overflow,
    unpack_pattern_elements,
    unpack_trace_elements,
)
from branchreplay.core.types import (
    EOT,
    BranchRecord,
    HintInfo,
    PatternElement,
    TraceBundle,
    TraceElement,
)
from branchreplay.errors import InvalidHint, MalformedBundle


# -- split_overflow ------------------------------------------------------------

def test_split_overflow_small_count_is_identity():
    assert split_overflow(12, 200) == (PatternElement(12, 200),)


def test_split_overflow_factors_into_full_chunks_plus_remainder():
    parts = split_overflow(-3, 1000)
    assert sum(p.reps for p in parts) == 1000
    assert all(p.target_offset == -3 for p in parts)
    # greedy: all-but-last chunks are full
    assert all(p.reps == 255 for p in parts[:-1])
    assert parts[-1].reps == 1000 - 255 * 3


def test_split_overflow_exact_multiple():
    parts = split_overflow(5, 510)
    assert [p.reps for p in parts] == [255, 255]


# -- compact pattern store -----------------------------------------------------

def _pe(seq):
    return tuple(PatternElement(off, reps) for off, reps in seq)


def test_compact_reuses_contained_subsequences():
    # {AB, BA, AB} fits in ABA: B A B -> "ABA" has AB at 0 and BA at 1
    a = PatternElement(1, 1)
    b = PatternElement(2, 1)
    store, index = compact_pattern_store([(a, b), (b, a), (a, b)])
    assert len(store) == 3  # A B A
    pos_ab, len_ab = index[(a, b)]
    pos_ba, len_ba = index[(b, a)]
    assert len_ab == len_ba == 2
    assert store[pos_ab: pos_ab + 2] == (a, b)
    assert store[pos_ba: pos_ba + 2] == (b, a)


def test_compact_merges_suffix_prefix_overlap():
    # ACT + CTA overlap on CT -> ACTA (4 slots, not 6)
    a, c, t = PatternElement(1, 1), PatternElement(2, 1), PatternElement(3, 1)
    store, index = compact_pattern_store([(a, c, t), (c, t, a)])
    assert len(store) == 4
    for pat in [(a, c, t), (c, t, a)]:
        pos, ln = index[pat]
        assert store[pos: pos + ln] == pat


@pytest.mark.parametrize("seed", range(30))
def test_compact_is_valid_and_never_worse_than_concatenation(seed):
    rng = random.Random(seed)
    alphabet = [PatternElement(off, rng.randint(1, 3)) for off in range(1, 5)]
    patterns = [
        tuple(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
        for _ in range(rng.randint(1, 4))
    ]
    store, index = compact_pattern_store(patterns)
    # validity: every pattern is present at its reported slice
    for pat in patterns:
        pos, ln = index[tuple(pat)]
        assert ln == len(pat)
        assert store[pos: pos + ln] == tuple(pat)
    # deduplicated concatenation is the no-compaction upper bound
    assert len(store) <= sum(len(p) for p in set(patterns))


# -- hint codec ----------------------------------------------------------------

def test_hint_roundtrip_exhaustive_14_bits():
    """Every decodable 14-bit value round-trips; the reserved combination
    (single-target with the short-trace bit) is rejected."""
    seen = set()
    for value in range(1 << 14):
        single = bool((value >> 13) & 1)
        short = bool(value & 1)
        if single and short:
            with pytest.raises(InvalidHint):
                decode_hint(value)
            continue
        hint = decode_hint(value)
        assert encode_hint(hint) == value
        seen.add(value)
    assert len(seen) == (1 << 14) - (1 << 12)


def test_hint_signed_field_for_single_target():
    hint = HintInfo(single_target=True, field12=-7, short_trace=False)
    assert decode_hint(encode_hint(hint)) == hint
    hint = HintInfo(single_target=False, field12=2047, short_trace=True)
    assert decode_hint(encode_hint(hint)) == hint


# -- element packers -----------------------------------------------------------

def test_pattern_element_is_exactly_20_bits():
    # 2 elements -> 40 bits -> 5 bytes; 3 -> 60 bits -> 8 bytes
    assert len(pack_pattern_elements(_pe([(1, 1)] * 2))) == 5
    assert len(pack_pattern_elements(_pe([(1, 1)] * 3))) == 8
    assert len(pack_pattern_elements(())) == 0


def test_pattern_element_bit_layout():
    # offset -1 = 0xFFF (signed 12-bit), reps 255 = 0xFF: first element
    # occupies bits 0..19 LSB-first
    data = pack_pattern_elements((PatternElement(-1, 255),))
    value = int.from_bytes(data, "little")
    assert value & 0xFFF == 0xFFF
    assert (value >> 12) & 0xFF == 0xFF


def test_trace_element_is_exactly_41_bits():
    eot_only = pack_trace_elements((EOT,))
    assert len(eot_only) == 6  # ceil(41/8)
    two = pack_trace_elements(
        (TraceElement(0, 1, 1, 1), EOT)
    )
    assert len(two) == 11  # ceil(82/8)


def test_trace_element_bit_layout():
    el = TraceElement(
        pattern_index=0xA, pattern_size=0x3,
        pattern_counter=0x1234, trace_counter=0x5678,
    )
    value = int.from_bytes(pack_trace_elements((el,)), "little")
    assert value & 0xF == 0xA
    assert (value >> 4) & 0xF == 0x3
    assert (value >> 8) & 0xFFFF == 0x1234
    assert (value >> 24) & 0xFFFF == 0x5678
    assert (value >> 40) & 1 == 0


@pytest.mark.parametrize("seed", range(20))
def test_element_packers_roundtrip_randomized(seed):
    rng = random.Random(1000 + seed)
    store = tuple(
        PatternElement(rng.randint(-2048, 2047), rng.randint(1, 255))
        for _ in range(rng.randint(0, 16))
    )
    assert unpack_pattern_elements(pack_pattern_elements(store), len(store)) == store
    def rand_element():
        index = rng.randint(0, 15)
        return TraceElement(index, rng.randint(1, 16 - index),
                            rng.randint(1, 0xFFFF), rng.randint(1, 0xFFFF))

    elements = tuple(
        rand_element() for _ in range(rng.randint(0, 15))
    ) + (EOT,)
    assert unpack_trace_elements(pack_trace_elements(elements), len(elements)) == elements


# -- bundle codec ----------------------------------------------------------------

def _random_bundle(rng: random.Random) -> TraceBundle:
    records = []
    pcs = sorted(rng.sample(range(16, 4096), rng.randint(1, 8)))
    for idx, pc in enumerate(pcs):
        if rng.random() < 0.3:
            hint = HintInfo(True, rng.randint(-2048, 2047), False)
            records.append(BranchRecord(pc, hint, (), ()))
            continue
        store = tuple(
            PatternElement(rng.randint(-2048, 2047), rng.randint(1, 255))
            for _ in range(rng.randint(1, 6))
        )
        elements = []
        for _ in range(rng.randint(1, 6)):
            pos = rng.randint(0, len(store) - 1)
            size = rng.randint(1, len(store) - pos)
            pcount = sum(store[pos + i].reps for i in range(size))
            elements.append(
                TraceElement(pos, size, pcount, rng.randint(1, 0xFFFF))
            )
        elements.append(EOT)
        hint = HintInfo(False, idx, rng.random() < 0.5)
        records.append(BranchRecord(pc, hint, store, tuple(elements)))
    return TraceBundle("ab" * 32, 16, 4096, tuple(records))


def test_bundle_roundtrip_randomized():
    rng = random.Random(7)
    for _ in range(200):
        bundle = _random_bundle(rng)
        assert decode_bundle(encode_bundle(bundle)) == bundle


def test_bundle_encoding_is_deterministic():
    rng = random.Random(8)
    bundle = _random_bundle(rng)
    assert encode_bundle(bundle) == encode_bundle(bundle)


def test_bundle_rejects_bad_magic():
    rng = random.Random(9)
    blob = bytearray(encode_bundle(_random_bundle(rng)))
    blob[:4] = b"XXXX"
    with pytest.raises(MalformedBundle):
        decode_bundle(bytes(blob))


def test_bundle_rejects_bad_version():
    rng = random.Random(10)
    blob = bytearray(encode_bundle(_random_bundle(rng)))
    blob[4] = 99
    with pytest.raises(MalformedBundle):
        decode_bundle(bytes(blob))


def test_bundle_rejects_truncation_everywhere():
    rng = random.Random(11)
    blob = encode_bundle(_random_bundle(rng))
    for cut in range(len(blob)):
        with pytest.raises(MalformedBundle):
            decode_bundle(blob[:cut])


def test_bundle_rejects_trailing_garbage():
    rng = random.Random(12)
    blob = encode_bundle(_random_bundle(rng))
    with pytest.raises(MalformedBundle):
        decode_bundle(blob + b"\x00")


def test_bundle_magic_constant():
    assert MAGIC == b"BTB1"
