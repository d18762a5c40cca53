"""Wire encodings: overflow splitting, store compaction, hints, bundles.

Bit-level conventions used throughout:
  * bitstreams are LSB-first: the first field written occupies the lowest
    bits of the first byte;
  * multi-byte scalar header fields are little-endian;
  * each variable-length bitstream is padded to a byte boundary.

A serialized bundle looks like:

    magic  b"BTB1"
    version u8 (currently 1)
    program_hash 32 bytes (SHA-256)
    crypto_lo u64, crypto_hi u64
    record_count u32
    records, sorted by branch_pc, each:
        branch_pc u64
        hint u16 (14 bits used)
        n_store u8, n_elements u16
        store bitstream: 20 bits per pattern element
        element bitstream: 41 bits per trace element
"""

from __future__ import annotations

import struct
from collections.abc import Sequence

from branchreplay.core.types import (
    COUNTER_MAX,
    REPS_MAX,
    STORE_CAPACITY,
    BranchRecord,
    HintInfo,
    PatternElement,
    TraceBundle,
    TraceElement,
)
from branchreplay.errors import (
    CapacityExceeded,
    InvalidHint,
    MalformedBundle,
    OffsetOverflow,
)

MAGIC = b"BTB1"
VERSION = 1

PATTERN_ELEMENT_BITS = 20
TRACE_ELEMENT_BITS = 41
HINT_BITS = 14


# -- overflow splitting -------------------------------------------------------

def split_overflow(target_offset: int, count: int) -> tuple[PatternElement, ...]:
    """Split a run longer than 255 into chained pattern elements.

    Greedy: as many full-255 elements as needed, then the remainder.
    The reps of the result always sum to `count`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    full, rem = divmod(count, REPS_MAX)
    out.extend(PatternElement(target_offset, REPS_MAX) for _ in range(full))
    if rem:
        out.append(PatternElement(target_offset, rem))
    return tuple(out)


# -- pattern store compaction -------------------------------------------------

def _find_sub(store: list[PatternElement], pat: Sequence[PatternElement]) -> int:
    """Index of pat as a contiguous subsequence of store, or -1."""
    n, m = len(store), len(pat)
    for i in range(n - m + 1):
        if store[i:i + m] == list(pat):
            return i
    return -1


def _overlap(store: list[PatternElement], pat: Sequence[PatternElement]) -> int:
    """Longest suffix of store that is a prefix of pat."""
    best = 0
    m = min(len(store), len(pat))
    for k in range(1, m + 1):
        if store[len(store) - k:] == list(pat[:k]):
            best = k
    return best


def compact_pattern_store(
    patterns: Sequence[Sequence[PatternElement]],
) -> tuple[tuple[PatternElement, ...], dict[tuple[PatternElement, ...], tuple[int, int]]]:
    """Pack several patterns into one shared store of at most 16 elements.

    Patterns are processed in input order. A pattern already present as a
    contiguous slice maps to its first occurrence; otherwise it is appended,
    merging the longest overlap between the store's suffix and the pattern's
    prefix. Returns (store, index_map) where index_map gives each distinct
    pattern its (pattern_index, pattern_size).

    Raises CapacityExceeded when the store would outgrow 16 elements.
    """
    store: list[PatternElement] = []
    index_map: dict[tuple[PatternElement, ...], tuple[int, int]] = {}
    for pat in patterns:
        key = tuple(pat)
        if not key:
            raise ValueError("empty pattern")
        if key in index_map:
            continue
        pos = _find_sub(store, key)
        if pos < 0:
            keep = _overlap(store, key)
            store.extend(key[keep:])
            if len(store) > STORE_CAPACITY:
                raise CapacityExceeded(
                    f"pattern store needs {len(store)} elements, capacity is "
                    f"{STORE_CAPACITY}"
                )
            pos = len(store) - len(key)
        index_map[key] = (pos, len(key))
    return tuple(store), index_map


# -- hint encoding ------------------------------------------------------------

def encode_hint(hint: HintInfo) -> int:
    """Pack a hint into its 14-bit integer form."""
    return (
        (int(hint.single_target) << 13)
        | ((hint.field12 & 0xFFF) << 1)
        | int(hint.short_trace)
    )


def decode_hint(value: int) -> HintInfo:
    """Inverse of encode_hint. Raises InvalidHint on the excluded bit combo."""
    if not 0 <= value < (1 << HINT_BITS):
        raise InvalidHint(f"hint value {value} does not fit 14 bits")
    single = bool(value >> 13)
    short = bool(value & 1)
    field12 = (value >> 1) & 0xFFF
    if field12 >= 0x800:
        field12 -= 0x1000
    if single and short:
        raise InvalidHint("single-target and short-trace bits both set")
    return HintInfo(single_target=single, field12=field12, short_trace=short)


# -- bit-level packing --------------------------------------------------------

class _BitWriter:
    def __init__(self):
        self._acc = 0
        self._nbits = 0
        self._out = bytearray()

    def write(self, value: int, nbits: int) -> None:
        self._acc |= (value & ((1 << nbits) - 1)) << self._nbits
        self._nbits += nbits
        while self._nbits >= 8:
            self._out.append(self._acc & 0xFF)
            self._acc >>= 8
            self._nbits -= 8

    def bytes(self) -> bytes:
        if self._nbits:
            self._out.append(self._acc & 0xFF)
            self._acc = 0
            self._nbits = 0
        return bytes(self._out)


class _BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._acc = 0
        self._nbits = 0

    def read(self, nbits: int) -> int:
        while self._nbits < nbits:
            if self._pos >= len(self._data):
                raise MalformedBundle("bitstream truncated")
            self._acc |= self._data[self._pos] << self._nbits
            self._pos += 1
            self._nbits += 8
        value = self._acc & ((1 << nbits) - 1)
        self._acc >>= nbits
        self._nbits -= nbits
        return value


def pack_pattern_elements(store: Sequence[PatternElement]) -> bytes:
    w = _BitWriter()
    for el in store:
        w.write(el.target_offset & 0xFFF, 12)
        w.write(el.reps, 8)
    return w.bytes()


def unpack_pattern_elements(data: bytes, count: int) -> tuple[PatternElement, ...]:
    r = _BitReader(data)
    out = []
    for _ in range(count):
        off = r.read(12)
        if off >= 0x800:
            off -= 0x1000
        reps = r.read(8)
        if reps == 0:
            raise MalformedBundle("pattern element with zero reps")
        out.append(PatternElement(off, reps))
    return tuple(out)


def pack_trace_elements(elements: Sequence[TraceElement]) -> bytes:
    w = _BitWriter()
    for el in elements:
        w.write(el.pattern_index, 4)
        w.write(el.pattern_size, 4)
        w.write(el.pattern_counter, 16)
        w.write(el.trace_counter, 16)
        w.write(int(el.eot), 1)
    return w.bytes()


def unpack_trace_elements(data: bytes, count: int) -> tuple[TraceElement, ...]:
    r = _BitReader(data)
    out = []
    for _ in range(count):
        pi = r.read(4)
        ps = r.read(4)
        pc = r.read(16)
        tc = r.read(16)
        eot = bool(r.read(1))
        try:
            out.append(TraceElement(pi, ps, pc, tc, eot=eot))
        except (ValueError, OffsetOverflow) as exc:
            raise MalformedBundle(f"bad trace element: {exc}") from exc
    return tuple(out)


def _bitstream_len(count: int, bits_per: int) -> int:
    return (count * bits_per + 7) // 8


# -- bundle encoding ----------------------------------------------------------

_HEADER = struct.Struct("<4sB32sQQI")
_REC_HEAD = struct.Struct("<QHBH")


def encode_bundle(bundle: TraceBundle) -> bytes:
    """Serialize a bundle. Deterministic: equal bundles give equal bytes."""
    out = bytearray()
    out += _HEADER.pack(
        MAGIC,
        VERSION,
        bytes.fromhex(bundle.program_hash),
        bundle.crypto_lo,
        bundle.crypto_hi,
        len(bundle.records),
    )
    for rec in bundle.records:
        out += _REC_HEAD.pack(
            rec.branch_pc,
            encode_hint(rec.hint),
            len(rec.store),
            len(rec.elements),
        )
        out += pack_pattern_elements(rec.store)
        out += pack_trace_elements(rec.elements)
    return bytes(out)


def decode_bundle(data: bytes) -> TraceBundle:
    """Inverse of encode_bundle.

    Raises MalformedBundle on truncation, a bad magic/version, trailing
    bytes, or any structural invariant violation.
    """
    if len(data) < _HEADER.size:
        raise MalformedBundle("header truncated")
    magic, version, digest, lo, hi, nrec = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedBundle(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedBundle(f"unsupported version {version}")
    pos = _HEADER.size
    records = []
    for _ in range(nrec):
        if len(data) < pos + _REC_HEAD.size:
            raise MalformedBundle("record header truncated")
        branch_pc, hint_raw, n_store, n_elems = _REC_HEAD.unpack_from(data, pos)
        pos += _REC_HEAD.size
        try:
            hint = decode_hint(hint_raw)
        except InvalidHint as exc:
            raise MalformedBundle(str(exc)) from exc
        store_len = _bitstream_len(n_store, PATTERN_ELEMENT_BITS)
        elem_len = _bitstream_len(n_elems, TRACE_ELEMENT_BITS)
        if len(data) < pos + store_len + elem_len:
            raise MalformedBundle("record body truncated")
        store = unpack_pattern_elements(data[pos:pos + store_len], n_store)
        pos += store_len
        elements = unpack_trace_elements(data[pos:pos + elem_len], n_elems)
        pos += elem_len
        try:
            records.append(BranchRecord(branch_pc, hint, store, elements))
        except ValueError as exc:
            raise MalformedBundle(f"bad record: {exc}") from exc
    if pos != len(data):
        raise MalformedBundle(f"{len(data) - pos} trailing bytes")
    try:
        return TraceBundle(digest.hex(), lo, hi, tuple(records))
    except ValueError as exc:
        raise MalformedBundle(str(exc)) from exc
